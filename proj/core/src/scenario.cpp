#include "gridshare/scenario.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "gridshare/errors.hpp"

namespace gridshare {

namespace {

using nlohmann::json;

[[noreturn]] void rethrow_with_scenario(const std::string& name) {
    const std::string tag = name + ": ";
    try {
        throw;
    } catch (const TopologyError& e) {
        throw TopologyError(tag + e.what());
    } catch (const DimensionError& e) {
        throw DimensionError(tag + e.what());
    } catch (const PowerFlowDiverged& e) {
        throw PowerFlowDiverged(tag + e.what());
    } catch (const DomainError& e) {
        throw DomainError(tag + e.what());
    } catch (const EnvelopeInfeasible& e) {
        throw EnvelopeInfeasible(tag + e.what());
    } catch (const Infeasible& e) {
        throw Infeasible(tag + e.what());
    } catch (const SolverDiverged& e) {
        throw SolverDiverged(tag + e.what());
    } catch (const RootBracketError& e) {
        throw RootBracketError(tag + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(tag + e.what());
    } catch (const EquilibriumViolation& e) {
        throw EquilibriumViolation(tag + e.what());
    } catch (const Error& e) {
        throw Error(tag + e.what());
    }
}

std::string resolve_against(const std::filesystem::path& base_dir, const std::string& file) {
    std::filesystem::path p(file);
    if (p.is_absolute()) return p.string();
    return (base_dir / p).string();
}

}  // namespace

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }

    auto need_string = [&](const char* field) {
        if (!j.contains(field) || !j.at(field).is_string())
            throw ConfigError(std::string(field) + ": string required");
        return j.at(field).get<std::string>();
    };

    Scenario sc;
    sc.name = j.contains("name") ? need_string("name")
                                 : std::filesystem::path(path).stem().string();

    const std::filesystem::path base_dir = std::filesystem::path(path).parent_path();
    sc.network_file = resolve_against(base_dir, need_string("network_file"));
    sc.prosumer_file = resolve_against(base_dir, need_string("prosumer_file"));

    if (!j.contains("tariff") || !j.at("tariff").is_object())
        throw ConfigError("tariff: object required");
    const json& jt = j.at("tariff");
    if (!jt.contains("pi_plus") || !jt.at("pi_plus").is_number())
        throw ConfigError("tariff.pi_plus: number required");
    if (!jt.contains("pi_minus") || !jt.at("pi_minus").is_number())
        throw ConfigError("tariff.pi_minus: number required");
    sc.tariff.pi_plus = jt.at("pi_plus").get<double>();
    sc.tariff.pi_minus = jt.at("pi_minus").get<double>();
    if (!(sc.tariff.pi_plus >= sc.tariff.pi_minus && sc.tariff.pi_minus >= 0.0))
        throw ConfigError("tariff: needs pi_plus >= pi_minus >= 0");

    if (j.contains("g_scale")) {
        if (!j.at("g_scale").is_number()) throw ConfigError("g_scale: number required");
        sc.g_scale = j.at("g_scale").get<double>();
        if (!(sc.g_scale >= 0.0) || !std::isfinite(sc.g_scale))
            throw ConfigError("g_scale: must be >= 0");
    }
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_integer()) throw ConfigError("seed: integer required");
        sc.seed = j.at("seed").get<long>();
    }
    if (j.contains("options")) {
        const json& jo = j.at("options");
        if (!jo.is_object()) throw ConfigError("options: object required");
        if (jo.contains("trace")) {
            if (!jo.at("trace").is_boolean()) throw ConfigError("options.trace: boolean required");
            sc.options.trace = jo.at("trace").get<bool>();
        }
        if (jo.contains("use_exact_pf_for_report")) {
            if (!jo.at("use_exact_pf_for_report").is_boolean())
                throw ConfigError("options.use_exact_pf_for_report: boolean required");
            sc.options.use_exact_pf_for_report = jo.at("use_exact_pf_for_report").get<bool>();
        }
    }

    // Surface broken references and schema problems at load time.
    load_network(sc.network_file);
    load_prosumers(sc.prosumer_file);
    return sc;
}

RunResult run(const Scenario& sc) {
    try {
        RunResult r;
        r.network = load_network(sc.network_file);
        LoadedProsumers lp = load_prosumers(sc.prosumer_file);
        r.prosumers = std::move(lp.prosumers);
        for (Prosumer& p : r.prosumers) p.g *= sc.g_scale;
        for (const Prosumer& p : r.prosumers) r.G0 += p.g;

        const SensitivityMatrices sens =
            with_energy_base(build_sensitivities(r.network.net), r.network.s_base_kva);

        SolveOptions opts;
        if (sc.options.trace)
            opts.trace = [&r](const TracePoint& tp) { r.trace.push_back(tp); };

        r.central = solve_central(sens, r.prosumers, sc.tariff, opts);
        r.schedule = ex_ante_prices(sens, r.prosumers, sc.tariff, r.central);
        r.equilibrium = verify_equilibrium(r.schedule, r.prosumers, sc.tariff, r.central);

        // Settlement uses the realized best responses to the posted prices,
        // which the audit above pinned to the plan.
        Eigen::VectorXd z_br(r.prosumers.size());
        for (size_t n = 0; n < r.prosumers.size(); ++n)
            z_br[n] = best_response_enveloped(r.prosumers[n],
                                              r.schedule.bus_price[r.prosumers[n].bus - 1])
                          .z;
        r.settlement = settle(r.schedule, sc.tariff, r.prosumers, z_br);
        r.Z0 = z_br.sum();

        const Eigen::VectorXd Z_bus = accumulate_bus(r.prosumers, z_br, sens.size());
        r.voltages_linear = lin_voltages(sens, Z_bus);
        const VoltageFeasibility vf = check_voltage_feasibility(sens, Z_bus);
        if (!vf.all_feasible)
            throw SolverDiverged("realized consumption violates the voltage bounds");
        if (sc.options.use_exact_pf_for_report)
            r.voltages_exact = exact_voltages(r.network.net, Z_bus / r.network.s_base_kva);

        r.welfare = r.central.solution.welfare;
        r.regime = r.central.solution.regime;
        r.solver_stats = r.central.solution.stats;
        return r;
    } catch (const Error&) {
        rethrow_with_scenario(sc.name);
    }
}

std::vector<SweepEntry> sweep(const Scenario& sc, const std::vector<double>& g_scales) {
    for (size_t i = 1; i < g_scales.size(); ++i)
        if (g_scales[i] < g_scales[i - 1])
            throw DomainError("sweep scales must be ascending");

    std::vector<SweepEntry> out;
    out.reserve(g_scales.size());
    for (double s : g_scales) {
        SweepEntry entry;
        entry.g_scale = s;
        Scenario point = sc;
        point.g_scale = s;
        point.name = sc.name + "@" + std::to_string(s);
        try {
            entry.result = run(point);
        } catch (const Error& e) {
            entry.error = e.what();
        }
        out.push_back(std::move(entry));
    }
    return out;
}

}  // namespace gridshare
