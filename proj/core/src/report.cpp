#include "gridshare/report.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "gridshare/errors.hpp"

namespace gridshare {

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    return out;
}

}  // namespace

std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

void write_settlement_csv(const std::string& path, const RunResult& r) {
    const Settlement& s = r.settlement;
    if (std::abs(s.operator_balance) >= 1e-9 * std::max(1.0, std::abs(s.nem_cost)))
        throw EquilibriumViolation("settlement is not profit-neutral: operator balance " +
                                   format_number(s.operator_balance));
    for (Eigen::Index n = 0; n < s.z.size(); ++n)
        if (std::abs(s.final_payment[n] - s.nem_rate * s.z[n]) >= 1e-9)
            throw EquilibriumViolation("payment of prosumer " +
                                       std::to_string(s.prosumer_id[n]) +
                                       " is not uniform at the NEM rate");

    std::ofstream out = open_out(path);
    out << "prosumer_id,bus,z_kwh,bus_price,ex_ante_charge,allocation,final_payment\n";
    for (Eigen::Index n = 0; n < s.z.size(); ++n) {
        out << s.prosumer_id[n] << ',' << r.prosumers[n].bus << ',' << format_number(s.z[n])
            << ',' << format_number(r.schedule.bus_price[r.prosumers[n].bus - 1]) << ','
            << format_number(s.ex_ante_charge[n]) << ',' << format_number(s.allocation[n]) << ','
            << format_number(s.final_payment[n]) << '\n';
    }
}

void write_schedule_csv(const std::string& path, const RunResult& r) {
    std::ofstream out = open_out(path);
    out << "bus,price,eta_up,eta_lo\n";
    for (Eigen::Index i = 0; i < r.schedule.bus_price.size(); ++i) {
        out << i + 1 << ',' << format_number(r.schedule.bus_price[i]) << ','
            << format_number(r.schedule.eta_up_used[i]) << ','
            << format_number(r.schedule.eta_lo_used[i]) << '\n';
    }
}

void write_voltages_csv(const std::string& path, const RunResult& r) {
    const bool exact = r.voltages_exact.size() == r.voltages_linear.size();
    std::ofstream out = open_out(path);
    out << "bus,v2_linear_pu2,v2_exact_pu2,v_linear_pu,v_exact_pu\n";
    for (Eigen::Index i = 0; i < r.voltages_linear.size(); ++i) {
        out << i + 1 << ',' << format_number(r.voltages_linear[i]) << ',';
        if (exact) out << format_number(r.voltages_exact[i]);
        out << ',' << format_number(std::sqrt(r.voltages_linear[i])) << ',';
        if (exact) out << format_number(std::sqrt(r.voltages_exact[i]));
        out << '\n';
    }
}

void write_trace_csv(const std::string& dir, const RunResult& r) {
    std::map<Regime, std::ofstream> files;
    for (const TracePoint& tp : r.trace) {
        auto it = files.find(tp.regime);
        if (it == files.end()) {
            const std::string path =
                (std::filesystem::path(dir) / ("trace_" + std::string(regime_name(tp.regime)) +
                                               ".csv"))
                    .string();
            it = files.emplace(tp.regime, open_out(path)).first;
            it->second << "iteration,dual_residual,primal_residual,welfare\n";
        }
        it->second << tp.iteration << ',' << format_number(tp.dual_residual) << ','
                   << format_number(tp.primal_residual) << ',' << format_number(tp.welfare)
                   << '\n';
    }
}

void write_sweep_csv(const std::string& path, const std::vector<SweepEntry>& entries) {
    std::ofstream out = open_out(path);
    out << "g_scale,G0_kwh,Z0_kwh,sigma1_kwh,sigma2_kwh,regime,"
           "price_min_usd_per_kwh,price_max_usd_per_kwh,welfare_usd,error\n";
    for (const SweepEntry& e : entries) {
        out << format_number(e.g_scale) << ',';
        if (e.result) {
            const RunResult& r = *e.result;
            out << format_number(r.G0) << ',' << format_number(r.Z0) << ','
                << format_number(r.schedule.sigma1) << ',' << format_number(r.schedule.sigma2)
                << ',' << regime_name(r.schedule.regime) << ','
                << format_number(r.schedule.bus_price.minCoeff()) << ','
                << format_number(r.schedule.bus_price.maxCoeff()) << ','
                << format_number(r.welfare) << ',';
        } else {
            out << ",,,,,,,,";
        }
        out << e.error << '\n';
    }
}

void write_summary_json(const std::string& path, const Scenario& sc, const RunResult& r) {
    nlohmann::json j;
    j["scenario"] = {{"name", sc.name},
                     {"g_scale", sc.g_scale},
                     {"seed", sc.seed},
                     {"tariff", {{"pi_plus", sc.tariff.pi_plus}, {"pi_minus", sc.tariff.pi_minus}}}};
    j["market"] = {{"regime", regime_name(r.regime)},
                   {"welfare_usd", r.welfare},
                   {"G0_kwh", r.G0},
                   {"Z0_kwh", r.Z0},
                   {"sigma1_kwh", r.schedule.sigma1},
                   {"sigma2_kwh", r.schedule.sigma2}};
    if (r.schedule.mu) j["market"]["mu_usd_per_kwh"] = *r.schedule.mu;
    j["solver"] = {{"iterations", r.solver_stats.iterations},
                   {"primal_residual", r.solver_stats.primal_residual},
                   {"comp_residual", r.solver_stats.comp_residual},
                   {"converged", r.solver_stats.converged}};
    j["equilibrium"] = {{"max_deviation_kwh", r.equilibrium.max_deviation},
                        {"surplus_defect_rel", r.equilibrium.max_surplus_defect}};
    j["settlement"] = {{"nem_rate_usd_per_kwh", r.settlement.nem_rate},
                       {"nem_cost_usd", r.settlement.nem_cost},
                       {"operator_balance_usd", r.settlement.operator_balance}};
    std::ofstream out = open_out(path);
    out << j.dump(2) << '\n';
}

void write_run_outputs(const std::string& out_dir, const Scenario& sc, const RunResult& r) {
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    write_settlement_csv((dir / "settlement.csv").string(), r);
    write_schedule_csv((dir / "schedule.csv").string(), r);
    write_voltages_csv((dir / "voltages.csv").string(), r);
    write_summary_json((dir / "summary.json").string(), sc, r);
    if (!r.trace.empty()) write_trace_csv(out_dir, r);
}

}  // namespace gridshare
