#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "gridshare/network.hpp"
#include "gridshare/prosumer.hpp"
#include "gridshare/tariff.hpp"
#include "gridshare/welfare.hpp"

namespace gridshare {

/// Ex-ante bus prices plus the regime thresholds they were derived from.
struct PriceSchedule {
    double sigma1 = 0.0;  ///< aggregate best response at the import-regime prices
    double sigma2 = 0.0;  ///< aggregate best response at the export-regime prices
    Eigen::VectorXd bus_price;
    Regime regime = Regime::Import;
    Eigen::VectorXd eta_up_used;
    Eigen::VectorXd eta_lo_used;
    std::optional<double> mu;  ///< balanced-regime uniform price component
};

/// Network-adjusted price vector for sign regime kappa: the flat rate of the
/// regime (or mu when balanced), shifted per bus by the dual congestion
/// adjustment (R^T (eta_up - eta_lo))_i.
Eigen::VectorXd chi_kappa(const SensitivityMatrices& sens, const Tariff& tariff,
                          const Eigen::VectorXd& eta_up, const Eigen::VectorXd& eta_lo,
                          Regime kappa, std::optional<double> mu = std::nullopt);

/// Voltage-bound duals per sign regime, as produced by the subproblems.
struct ThresholdDuals {
    Eigen::VectorXd import_up, import_lo;
    Eigen::VectorXd export_up, export_lo;
};

/// Regime thresholds: total enveloped best response of the coalition at the
/// import-regime prices (sigma1) and at the export-regime prices (sigma2).
std::pair<double, double> thresholds(const SensitivityMatrices& sens,
                                     const std::vector<Prosumer>& prosumers, const Tariff& tariff,
                                     const ThresholdDuals& duals);

/// Balanced-regime price: the root of sum of best responses = G0, bisected
/// over a bracket spanning [pi_minus, pi_plus] widened by the largest dual
/// adjustment (with up to 10 doubling expansions). Throws RootBracketError
/// when no sign change is found.
double solve_mu(const SensitivityMatrices& sens, const std::vector<Prosumer>& prosumers,
                const Tariff& tariff, const Eigen::VectorXd& eta_up,
                const Eigen::VectorXd& eta_lo, double G0, double tol = 1e-10);

/// Builds the ex-ante price schedule from the central solution: picks the
/// regime by comparing total generation G0 against the thresholds, then
/// prices every bus with the regime-matched duals.
PriceSchedule ex_ante_prices(const SensitivityMatrices& sens,
                             const std::vector<Prosumer>& prosumers, const Tariff& tariff,
                             const CentralSolution& central);

/// Per-prosumer money flows of the two-part settlement.
struct Settlement {
    std::vector<int> prosumer_id;
    Eigen::VectorXd z;               ///< realized net consumption (kWh)
    Eigen::VectorXd ex_ante_charge;  ///< bus price times z
    Eigen::VectorXd allocation;      ///< ex-post rebate of the price gap
    Eigen::VectorXd final_payment;   ///< charge minus allocation = NEM rate times z
    double nem_rate = 0.0;           ///< marginal NEM rate applied to the coalition
    double nem_cost = 0.0;           ///< coalition NEM bill
    double operator_balance = 0.0;   ///< sum of final payments minus nem_cost
};

/// Settles realized consumptions: charges bus prices ex ante, rebates each
/// prosumer (bus price - NEM rate) * z ex post, so every prosumer ends up
/// paying exactly the NEM rate and the operator nets zero.
Settlement settle(const PriceSchedule& schedule, const Tariff& tariff,
                  const std::vector<Prosumer>& prosumers, const Eigen::VectorXd& z);

/// Equilibrium audit: every prosumer's enveloped best response to the posted
/// bus prices, compared coordinate-wise against the centrally planned
/// schedule.
struct EquilibriumReport {
    double max_deviation = 0.0;       ///< worst |d_br - d_central| over all devices
    double max_surplus_defect = 0.0;  ///< worst relative surplus shortfall
    bool pass = false;
};

/// Verifies that the central schedule is every prosumer's best response to
/// the posted prices and that total surplus matches central welfare. Throws
/// EquilibriumViolation (naming the worst offender) when a gap exceeds tol.
EquilibriumReport verify_equilibrium(const PriceSchedule& schedule,
                                     const std::vector<Prosumer>& prosumers, const Tariff& tariff,
                                     const CentralSolution& central, double tol = 1e-6);

/// Convenience form: solves the market, prices it, then audits as above.
EquilibriumReport verify_equilibrium(const SensitivityMatrices& sens,
                                     const std::vector<Prosumer>& prosumers, const Tariff& tariff,
                                     double tol = 1e-6);

}  // namespace gridshare
