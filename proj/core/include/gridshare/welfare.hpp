#pragma once

#include <Eigen/Core>
#include <functional>
#include <optional>
#include <vector>

#include "gridshare/network.hpp"
#include "gridshare/prosumer.hpp"
#include "gridshare/tariff.hpp"

namespace gridshare {

/// Sign regime of the coalition net consumption Z0 at the optimum.
enum class Regime { Import, Balanced, Export };

const char* regime_name(Regime r);

struct SolverStats {
    int iterations = 0;
    double primal_residual = 0.0;  ///< max voltage-bound violation
    double comp_residual = 0.0;    ///< max |eta_i * constraint_i|
    bool converged = false;
};

/// One dual-ascent iterate, reported through SolveOptions::trace.
struct TracePoint {
    Regime regime = Regime::Import;
    int iteration = 0;
    double dual_residual = 0.0;    ///< max projected-gradient component of the dual
    double primal_residual = 0.0;  ///< max voltage-bound violation
    double welfare = 0.0;
};

struct SolveOptions {
    int max_outer = 30000;
    double primal_tol = 1e-9;
    double comp_tol = 1e-9;
    std::function<void(const TracePoint&)> trace;
};

/// Welfare-optimal market state for one sign regime (or the regime winner).
struct MarketSolution {
    std::vector<Eigen::VectorXd> d;  ///< device schedules, one vector per prosumer
    Eigen::VectorXd z;               ///< per-prosumer net consumption (kWh)
    Eigen::VectorXd Z_bus;           ///< net consumption aggregated per bus
    double Z0 = 0.0;                 ///< coalition net consumption, 1^T z
    Eigen::VectorXd eta_up;          ///< duals of the upper voltage bounds
    Eigen::VectorXd eta_lo;          ///< duals of the lower voltage bounds
    std::optional<double> mu;        ///< balanced-regime shadow price, when applicable
    Regime regime = Regime::Import;
    double welfare = 0.0;  ///< sum of utilities minus the NEM cost of Z0
    SolverStats stats;
};

/// Solves one sign-regime subproblem by dual decomposition: projected ascent
/// on the voltage-bound duals, prosumer responses in closed form. The
/// Balanced regime pins Z0 = 0 through a bisected shadow price. Throws
/// SolverDiverged when the dual iteration fails to settle.
MarketSolution solve_subproblem(const SensitivityMatrices& sens,
                                const std::vector<Prosumer>& prosumers, const Tariff& tariff,
                                Regime regime, const SolveOptions& opts = {});

struct CentralSolution {
    MarketSolution solution;  ///< welfare-maximal, sign-consistent candidate
    /// Raw subproblem results, present whenever that subproblem converged,
    /// sign-consistent or not. The pricing layer reads regime-matched duals
    /// from these; only the sign check decides who can win.
    std::optional<MarketSolution> import_sol;
    std::optional<MarketSolution> balanced_sol;
    std::optional<MarketSolution> export_sol;
};

/// Solves all three sign regimes and keeps the welfare-maximal candidate
/// whose Z0 sign matches its regime. Ties prefer Balanced, then Import.
/// Throws Infeasible when no regime yields a valid candidate.
CentralSolution solve_central(const SensitivityMatrices& sens,
                              const std::vector<Prosumer>& prosumers, const Tariff& tariff,
                              const SolveOptions& opts = {});

/// Stationarity / feasibility / complementarity residuals of a solution.
struct KktReport {
    double primal = 0.0;          ///< max voltage-bound violation
    double dual = 0.0;            ///< max negative dual (0 when all duals >= 0)
    double complementarity = 0.0; ///< max |eta_i * slack_i|
    double stationarity = 0.0;    ///< max per-device optimality defect
    double max_residual = 0.0;
    bool pass = false;
};

/// Recomputes all KKT residuals of a market solution from first principles.
KktReport verify_kkt(const MarketSolution& sol, const SensitivityMatrices& sens,
                     const std::vector<Prosumer>& prosumers, const Tariff& tariff,
                     double tol = 1e-7);

/// Aggregates per-prosumer net consumptions into per-bus totals.
Eigen::VectorXd accumulate_bus(const std::vector<Prosumer>& prosumers, const Eigen::VectorXd& z,
                               int n_bus);

}  // namespace gridshare
