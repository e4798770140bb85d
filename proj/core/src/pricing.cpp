#include "gridshare/pricing.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gridshare/errors.hpp"
#include "gridshare/report.hpp"

namespace gridshare {

namespace {

void check_dual_dims(const SensitivityMatrices& sens, const Eigen::VectorXd& eta_up,
                     const Eigen::VectorXd& eta_lo) {
    if (eta_up.size() != sens.size() || eta_lo.size() != sens.size())
        throw DimensionError("dual vectors must have one entry per bus");
}

double aggregate_consumption(const std::vector<Prosumer>& prosumers, double base_price,
                             const Eigen::VectorXd& adj) {
    double total = 0.0;
    for (const Prosumer& p : prosumers)
        total += consumption_total_at_price(p, base_price - adj[p.bus - 1]);
    return total;
}

}  // namespace

Eigen::VectorXd chi_kappa(const SensitivityMatrices& sens, const Tariff& tariff,
                          const Eigen::VectorXd& eta_up, const Eigen::VectorXd& eta_lo,
                          Regime kappa, std::optional<double> mu) {
    check_dual_dims(sens, eta_up, eta_lo);
    double base;
    switch (kappa) {
        case Regime::Import: base = tariff.pi_plus; break;
        case Regime::Export: base = tariff.pi_minus; break;
        default:
            if (!mu) throw DomainError("balanced-regime prices need mu");
            base = *mu;
    }
    return Eigen::VectorXd::Constant(sens.size(), base) -
           sens.R.transpose() * (eta_up - eta_lo);
}

std::pair<double, double> thresholds(const SensitivityMatrices& sens,
                                     const std::vector<Prosumer>& prosumers, const Tariff& tariff,
                                     const ThresholdDuals& duals) {
    const Eigen::VectorXd chi_plus =
        chi_kappa(sens, tariff, duals.import_up, duals.import_lo, Regime::Import);
    const Eigen::VectorXd chi_minus =
        chi_kappa(sens, tariff, duals.export_up, duals.export_lo, Regime::Export);
    double sigma1 = 0.0, sigma2 = 0.0;
    for (const Prosumer& p : prosumers) {
        sigma1 += consumption_total_at_price(p, chi_plus[p.bus - 1]);
        sigma2 += consumption_total_at_price(p, chi_minus[p.bus - 1]);
    }
    return {sigma1, sigma2};
}

double solve_mu(const SensitivityMatrices& sens, const std::vector<Prosumer>& prosumers,
                const Tariff& tariff, const Eigen::VectorXd& eta_up,
                const Eigen::VectorXd& eta_lo, double G0, double tol) {
    check_dual_dims(sens, eta_up, eta_lo);
    const Eigen::VectorXd adj = sens.R.transpose() * (eta_up - eta_lo);
    const double delta = adj.size() > 0 ? adj.cwiseAbs().maxCoeff() : 0.0;

    // Aggregate consumption is non-increasing in mu; bracket the root so
    // that consumption at lo overshoots G0 and at hi undershoots it,
    // expanding by doubling when the tariff band is not wide enough.
    double lo = tariff.pi_minus - delta;
    double hi = tariff.pi_plus + delta;
    double w = std::max(hi - lo, 1.0);
    for (int e = 0; e < 10 && aggregate_consumption(prosumers, lo, adj) < G0; ++e, w *= 2.0)
        lo -= w;
    w = std::max(hi - lo, 1.0);
    for (int e = 0; e < 10 && aggregate_consumption(prosumers, hi, adj) > G0; ++e, w *= 2.0)
        hi += w;
    if (aggregate_consumption(prosumers, lo, adj) < G0 ||
        aggregate_consumption(prosumers, hi, adj) > G0)
        throw RootBracketError("no zero-net price brackets G0 = " + std::to_string(G0));

    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (aggregate_consumption(prosumers, mid, adj) >= G0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

PriceSchedule ex_ante_prices(const SensitivityMatrices& sens,
                             const std::vector<Prosumer>& prosumers, const Tariff& tariff,
                             const CentralSolution& central) {
    if (!central.import_sol || !central.export_sol)
        throw SolverDiverged("cannot derive thresholds: import or export subproblem unavailable");

    ThresholdDuals duals;
    duals.import_up = central.import_sol->eta_up;
    duals.import_lo = central.import_sol->eta_lo;
    duals.export_up = central.export_sol->eta_up;
    duals.export_lo = central.export_sol->eta_lo;

    PriceSchedule ps;
    std::tie(ps.sigma1, ps.sigma2) = thresholds(sens, prosumers, tariff, duals);

    double G0 = 0.0;
    for (const Prosumer& p : prosumers) G0 += p.g;

    if (G0 < ps.sigma1) {
        ps.regime = Regime::Import;
        ps.eta_up_used = duals.import_up;
        ps.eta_lo_used = duals.import_lo;
    } else if (G0 > ps.sigma2) {
        ps.regime = Regime::Export;
        ps.eta_up_used = duals.export_up;
        ps.eta_lo_used = duals.export_lo;
    } else {
        if (!central.balanced_sol)
            throw SolverDiverged("G0 lies between the thresholds but the balanced subproblem"
                                 " is unavailable");
        ps.regime = Regime::Balanced;
        ps.eta_up_used = central.balanced_sol->eta_up;
        ps.eta_lo_used = central.balanced_sol->eta_lo;
        ps.mu = solve_mu(sens, prosumers, tariff, ps.eta_up_used, ps.eta_lo_used, G0);
    }
    ps.bus_price = chi_kappa(sens, tariff, ps.eta_up_used, ps.eta_lo_used, ps.regime, ps.mu);
    return ps;
}

Settlement settle(const PriceSchedule& schedule, const Tariff& tariff,
                  const std::vector<Prosumer>& prosumers, const Eigen::VectorXd& z) {
    if (z.size() != static_cast<Eigen::Index>(prosumers.size()))
        throw DimensionError("one net consumption per prosumer required");

    Settlement s;
    const double Z0 = z.sum();
    const double rate = nem_price(tariff, Z0);
    s.nem_rate = rate;
    s.nem_cost = nem_cost(tariff, Z0);
    s.z = z;
    const Eigen::Index N = z.size();
    s.ex_ante_charge.resize(N);
    s.allocation.resize(N);
    s.final_payment.resize(N);
    s.prosumer_id.reserve(prosumers.size());

    double collected = 0.0;
    for (Eigen::Index n = 0; n < N; ++n) {
        const Prosumer& p = prosumers[n];
        s.prosumer_id.push_back(p.id);
        const double price = schedule.bus_price[p.bus - 1];
        s.ex_ante_charge[n] = price * z[n];
        s.allocation[n] = (price - rate) * z[n];
        s.final_payment[n] = s.ex_ante_charge[n] - s.allocation[n];
        collected += s.final_payment[n];
    }
    s.operator_balance = collected - s.nem_cost;
    return s;
}

EquilibriumReport verify_equilibrium(const PriceSchedule& schedule,
                                     const std::vector<Prosumer>& prosumers, const Tariff& tariff,
                                     const CentralSolution& central, double tol) {
    EquilibriumReport rep;
    const MarketSolution& plan = central.solution;
    int worst = -1;

    Eigen::VectorXd z_br(prosumers.size());
    double utility_sum = 0.0;
    for (size_t n = 0; n < prosumers.size(); ++n) {
        const Prosumer& p = prosumers[n];
        const ConsumptionBundle br = best_response_enveloped(p, schedule.bus_price[p.bus - 1]);
        z_br[n] = br.z;
        utility_sum += utility(p, br.d);
        const double dev = (br.d - plan.d[n]).lpNorm<Eigen::Infinity>();
        if (dev > rep.max_deviation) {
            rep.max_deviation = dev;
            worst = p.id;
        }
    }

    // Under the uniform final payment, total realized surplus telescopes to
    // the coalition welfare; compare against the central objective.
    const double Z0 = z_br.sum();
    const double total_surplus = utility_sum - nem_cost(tariff, Z0);
    rep.max_surplus_defect = std::abs(total_surplus - plan.welfare) /
                             std::max(1.0, std::abs(plan.welfare));

    rep.pass = rep.max_deviation <= tol && rep.max_surplus_defect <= tol;
    if (!rep.pass) {
        if (rep.max_deviation > tol)
            throw EquilibriumViolation("prosumer " + std::to_string(worst) +
                                       " deviates from the plan by " +
                                       format_number(rep.max_deviation) + " kWh");
        throw EquilibriumViolation("total surplus misses central welfare by relative " +
                                   format_number(rep.max_surplus_defect));
    }
    return rep;
}

EquilibriumReport verify_equilibrium(const SensitivityMatrices& sens,
                                     const std::vector<Prosumer>& prosumers, const Tariff& tariff,
                                     double tol) {
    const CentralSolution central = solve_central(sens, prosumers, tariff);
    const PriceSchedule schedule = ex_ante_prices(sens, prosumers, tariff, central);
    return verify_equilibrium(schedule, prosumers, tariff, central, tol);
}

}  // namespace gridshare
