// Command-line front end: run one scenario, sweep its renewable scale, or
// verify the market outcome (equilibrium, money invariants, optimality).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <gridshare/errors.hpp>
#include <gridshare/pricing.hpp>
#include <gridshare/report.hpp>
#include <gridshare/scenario.hpp>
#include <gridshare/welfare.hpp>

using namespace gridshare;

namespace {

double env_tol(double fallback) {
    const char* s = std::getenv("GRIDSHARE_TOL");
    if (!s || !*s) return fallback;
    char* end = nullptr;
    double v = std::strtod(s, &end);
    if (end == s || *end != '\0' || !(v > 0.0))
        throw ConfigError(std::string("GRIDSHARE_TOL: not a positive number: ") + s);
    return v;
}

void print_run(const Scenario& sc, const RunResult& r) {
    std::printf("scenario        %s (g_scale %s)\n", sc.name.c_str(),
                format_number(sc.g_scale).c_str());
    std::printf("regime          %s\n", regime_name(r.regime));
    std::printf("welfare         %s $\n", format_number(r.welfare).c_str());
    std::printf("G0              %s kWh\n", format_number(r.G0).c_str());
    std::printf("Z0              %s kWh\n", format_number(r.Z0).c_str());
    std::printf("thresholds      sigma1 %s, sigma2 %s kWh\n",
                format_number(r.schedule.sigma1).c_str(),
                format_number(r.schedule.sigma2).c_str());
    if (r.schedule.mu)
        std::printf("clearing price  %s $/kWh\n", format_number(*r.schedule.mu).c_str());
    std::printf("bus prices      %s .. %s $/kWh\n",
                format_number(r.schedule.bus_price.minCoeff()).c_str(),
                format_number(r.schedule.bus_price.maxCoeff()).c_str());
    std::printf("nem rate        %s $/kWh (cost %s $)\n",
                format_number(r.settlement.nem_rate).c_str(),
                format_number(r.settlement.nem_cost).c_str());
    std::printf("operator        %s $ balance\n",
                format_number(r.settlement.operator_balance).c_str());
    std::printf("equilibrium     max deviation %s kWh\n",
                format_number(r.equilibrium.max_deviation).c_str());
    std::printf("solver          %d iterations, primal %s, comp %s\n",
                r.solver_stats.iterations,
                format_number(r.solver_stats.primal_residual).c_str(),
                format_number(r.solver_stats.comp_residual).c_str());
}

int cmd_run(const std::string& scenario_file, bool trace, const std::string& out_dir) {
    Scenario sc = load_scenario(scenario_file);
    if (trace) sc.options.trace = true;
    RunResult r = run(sc);
    print_run(sc, r);
    if (!out_dir.empty()) {
        write_run_outputs(out_dir, sc, r);
        std::printf("outputs         %s\n", out_dir.c_str());
    }
    return 0;
}

int cmd_sweep(const std::string& scenario_file, const std::vector<double>& scales,
              const std::string& out_dir) {
    Scenario sc = load_scenario(scenario_file);
    auto entries = sweep(sc, scales);
    std::printf("%-10s %-12s %-12s %-10s %s\n", "g_scale", "G0_kwh", "Z0_kwh", "regime",
                "price_range");
    for (const auto& e : entries) {
        if (e.result) {
            const RunResult& r = *e.result;
            std::printf("%-10s %-12s %-12s %-10s %s .. %s\n",
                        format_number(e.g_scale).c_str(), format_number(r.G0).c_str(),
                        format_number(r.Z0).c_str(), regime_name(r.schedule.regime),
                        format_number(r.schedule.bus_price.minCoeff()).c_str(),
                        format_number(r.schedule.bus_price.maxCoeff()).c_str());
        } else {
            std::printf("%-10s error: %s\n", format_number(e.g_scale).c_str(),
                        e.error.c_str());
        }
    }
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        const std::string path = (std::filesystem::path(out_dir) / "sweep.csv").string();
        write_sweep_csv(path, entries);
        std::printf("outputs         %s\n", path.c_str());
    }
    return 0;
}

int cmd_verify(const std::string& scenario_file) {
    const double eq_tol = env_tol(1e-6);
    const double kkt_tol = env_tol(1e-7);
    const double money_tol = env_tol(1e-9);

    Scenario sc = load_scenario(scenario_file);
    RunResult r = run(sc);
    const SensitivityMatrices sens =
        with_energy_base(build_sensitivities(r.network.net), r.network.s_base_kva);

    bool ok = true;
    auto line = [&](const char* name, bool pass, const std::string& detail) {
        std::printf("%s %s (%s)\n", pass ? "PASS" : "FAIL", name, detail.c_str());
        ok = ok && pass;
    };

    EquilibriumReport eq;
    bool eq_pass = true;
    std::string eq_detail;
    try {
        eq = verify_equilibrium(r.schedule, r.prosumers, sc.tariff, r.central, eq_tol);
        eq_detail = "max deviation " + format_number(eq.max_deviation) +
                    " kWh, surplus defect " + format_number(eq.max_surplus_defect) + " rel";
    } catch (const EquilibriumViolation& e) {
        eq_pass = false;
        eq_detail = e.what();
    }
    line("equilibrium", eq_pass, eq_detail);

    const Settlement& s = r.settlement;
    double imbalance = std::abs(s.operator_balance) / std::max(1.0, std::abs(s.nem_cost));
    bool money_pass = imbalance < money_tol;
    double worst_gap = 0.0;
    for (Eigen::Index n = 0; n < s.z.size(); ++n)
        worst_gap = std::max(worst_gap, std::abs(s.final_payment[n] - s.nem_rate * s.z[n]));
    money_pass = money_pass && worst_gap < money_tol;
    line("neutrality", money_pass,
         "operator imbalance " + format_number(imbalance) + " rel, worst rate gap " +
             format_number(worst_gap) + " $");

    KktReport kkt = verify_kkt(r.central.solution, sens, r.prosumers, sc.tariff, kkt_tol);
    line("kkt", kkt.pass && kkt.max_residual < kkt_tol,
         "primal " + format_number(kkt.primal) + ", dual " + format_number(kkt.dual) +
             ", complementarity " + format_number(kkt.complementarity) + ", stationarity " +
             format_number(kkt.stationarity));

    return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"network-aware welfare-maximizing pricing for energy coalitions"};
    app.require_subcommand(1);

    std::string scenario_file;
    std::string out_dir;
    bool trace = false;
    std::vector<double> scales;

    CLI::App* c_run = app.add_subcommand("run", "solve one scenario and settle it");
    c_run->add_option("--scenario", scenario_file, "scenario JSON file")->required();
    c_run->add_flag("--trace", trace, "record the dual-solver trace");
    c_run->add_option("--out", out_dir, "directory for CSV/JSON outputs");

    CLI::App* c_sweep = app.add_subcommand("sweep", "rerun over a list of renewable scales");
    c_sweep->add_option("--scenario", scenario_file, "scenario JSON file")->required();
    c_sweep->add_option("--scales", scales, "ascending g_scale values")
        ->required()
        ->delimiter(',');
    c_sweep->add_option("--out", out_dir, "directory for the sweep CSV");

    CLI::App* c_verify = app.add_subcommand(
        "verify", "equilibrium, neutrality, and optimality checks (GRIDSHARE_TOL overrides)");
    c_verify->add_option("--scenario", scenario_file, "scenario JSON file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_run->parsed()) return cmd_run(scenario_file, trace, out_dir);
        if (c_sweep->parsed()) return cmd_sweep(scenario_file, scales, out_dir);
        return cmd_verify(scenario_file);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
