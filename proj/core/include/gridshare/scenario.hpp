#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gridshare/io.hpp"
#include "gridshare/pricing.hpp"
#include "gridshare/welfare.hpp"

namespace gridshare {

struct ScenarioOptions {
    bool trace = false;
    bool use_exact_pf_for_report = true;
};

/// One reproducible market run: a feeder, a prosumer population, a tariff,
/// and a multiplier on every prosumer's renewable output.
struct Scenario {
    std::string name;
    std::string network_file;
    std::string prosumer_file;
    Tariff tariff;
    double g_scale = 1.0;
    long seed = 0;  ///< recorded in outputs; the pipeline itself is deterministic
    ScenarioOptions options;
};

/// Parses and validates a scenario JSON file. Relative data paths are
/// resolved against the scenario file's directory. Throws ConfigError with
/// the offending field path.
Scenario load_scenario(const std::string& path);

struct RunResult {
    PriceSchedule schedule;
    Settlement settlement;
    Eigen::VectorXd voltages_linear;  ///< squared voltages (p.u.^2)
    Eigen::VectorXd voltages_exact;   ///< from the nonlinear sweep; empty when disabled
    double welfare = 0.0;
    Regime regime = Regime::Import;
    SolverStats solver_stats;
    double G0 = 0.0;  ///< total renewable output after scaling (kWh)
    double Z0 = 0.0;
    EquilibriumReport equilibrium;
    CentralSolution central;
    LoadedNetwork network;
    std::vector<Prosumer> prosumers;  ///< population with g_scale applied
    std::vector<TracePoint> trace;
};

/// Full pipeline: load data, solve the central market, price it, audit the
/// decentralized best responses against the plan, settle, and report both
/// linear and exact voltages. Solver errors propagate with the scenario
/// name prefixed.
RunResult run(const Scenario& sc);

struct SweepEntry {
    double g_scale = 0.0;
    std::optional<RunResult> result;
    std::string error;  ///< non-empty when this scale failed
};

/// Runs the scenario once per scale (ascending order required), collecting
/// per-run errors instead of aborting the sweep.
std::vector<SweepEntry> sweep(const Scenario& sc, const std::vector<double>& g_scales);

}  // namespace gridshare
