#include "gridshare/welfare.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <string>

#include "gridshare/errors.hpp"

namespace gridshare {

const char* regime_name(Regime r) {
    switch (r) {
        case Regime::Import: return "import";
        case Regime::Balanced: return "balanced";
        case Regime::Export: return "export";
    }
    return "?";
}

Eigen::VectorXd accumulate_bus(const std::vector<Prosumer>& prosumers, const Eigen::VectorXd& z,
                               int n_bus) {
    Eigen::VectorXd Z = Eigen::VectorXd::Zero(n_bus);
    for (size_t n = 0; n < prosumers.size(); ++n) Z[prosumers[n].bus - 1] += z[n];
    return Z;
}

namespace {

constexpr double kEtaCap = 1e12;

/// Inner maximizer at fixed duals: closed-form enveloped best responses at
/// the dual-adjusted prices, plus the voltage constraint values.
struct InnerPoint {
    std::vector<Eigen::VectorXd> d;
    Eigen::VectorXd z;
    Eigen::VectorXd Z_bus;
    double Z0 = 0.0;
    double utility_sum = 0.0;
    double price = 0.0;          ///< pi^kappa, or the pinning mu when balanced
    Eigen::VectorXd c_up, c_lo;  ///< constraint values, feasible when <= 0
    double dual_value = 0.0;
};

class SubproblemSolver {
  public:
    SubproblemSolver(const SensitivityMatrices& sens, const std::vector<Prosumer>& prosumers,
                     const Tariff& tariff, Regime regime, const SolveOptions& opts)
        : sens_(sens), prosumers_(prosumers), tariff_(tariff), regime_(regime), opts_(opts),
          B_(sens.size()) {
        double reach_lo = 0.0, reach_hi = 0.0, curv = 0.0;
        Eigen::VectorXd slope = Eigen::VectorXd::Zero(B_);
        price_floor_ = std::numeric_limits<double>::infinity();
        price_ceil_ = -std::numeric_limits<double>::infinity();
        for (const Prosumer& p : prosumers_) {
            if (p.bus < 1 || p.bus > B_)
                throw TopologyError("prosumer " + std::to_string(p.id) + " at unknown bus " +
                                    std::to_string(p.bus));
            G0_ += p.g;
            double box_lo = 0.0, box_hi = 0.0;
            for (const DeviceUtility& dev : p.devices) {
                box_lo += dev.d_lo;
                box_hi += dev.d_hi;
                price_floor_ = std::min(price_floor_, dev.alpha - dev.beta * dev.d_hi);
                price_ceil_ = std::max(price_ceil_, dev.alpha - dev.beta * dev.d_lo);
                slope[p.bus - 1] += 1.0 / dev.beta;
            }
            if (p.envelope) {
                if (p.envelope->z_lo + p.g > box_hi || p.envelope->z_hi + p.g < box_lo)
                    throw EnvelopeInfeasible("prosumer " + std::to_string(p.id) +
                                             ": envelope cannot be met by the device box");
                box_lo = std::max(box_lo, p.envelope->z_lo + p.g);
                box_hi = std::min(box_hi, p.envelope->z_hi + p.g);
            }
            reach_lo += box_lo;
            reach_hi += box_hi;
        }
        if (regime_ == Regime::Balanced && (G0_ < reach_lo - 1e-9 || G0_ > reach_hi + 1e-9))
            throw Infeasible("balanced regime cannot pin Z0 = 0: total generation " +
                             std::to_string(G0_) + " outside attainable consumption [" +
                             std::to_string(reach_lo) + ", " + std::to_string(reach_hi) + "]");
        // Curvature scale of the dual function, ~diag(R diag(slope) R^T).
        for (int i = 0; i < B_; ++i) curv = std::max(curv, sens_.R.row(i).cwiseAbs2().dot(slope));
        step0_ = curv > 0.0 ? 1.0 / (2.0 * curv) : 1.0;
    }

    MarketSolution run();

  private:
    InnerPoint respond(double price, const Eigen::VectorXd& adj) const {
        InnerPoint pt;
        pt.price = price;
        pt.d.reserve(prosumers_.size());
        pt.z.resize(prosumers_.size());
        for (size_t n = 0; n < prosumers_.size(); ++n) {
            const Prosumer& p = prosumers_[n];
            ConsumptionBundle b = best_response_enveloped(p, price - adj[p.bus - 1]);
            pt.utility_sum += utility(p, b.d);
            pt.z[n] = b.z;
            pt.d.push_back(std::move(b.d));
        }
        pt.Z_bus = accumulate_bus(prosumers_, pt.z, B_);
        pt.Z0 = pt.z.sum();
        return pt;
    }

    double aggregate_consumption(double mu, const Eigen::VectorXd& adj) const {
        double total = 0.0;
        for (const Prosumer& p : prosumers_)
            total += consumption_total_at_price(p, mu - adj[p.bus - 1]);
        return total;
    }

    /// Balanced regime: bisect the uniform price component until the
    /// coalition consumes exactly its generation.
    double pin_mu(const Eigen::VectorXd& adj) const {
        const double pad = adj.size() > 0 ? adj.cwiseAbs().maxCoeff() + 1.0 : 1.0;
        double lo = price_floor_ - pad;  // maximal consumption
        double hi = price_ceil_ + pad;   // minimal consumption
        if (!std::isfinite(lo) || !std::isfinite(hi)) return tariff_.pi_plus;  // no devices
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (aggregate_consumption(mid, adj) >= G0_)
                lo = mid;
            else
                hi = mid;
            if (hi - lo <= 1e-15 * std::max(1.0, std::abs(mid))) break;
        }
        return 0.5 * (lo + hi);
    }

    InnerPoint evaluate(const Eigen::VectorXd& eta) const {
        const Eigen::VectorXd diff = eta.head(B_) - eta.tail(B_);
        const Eigen::VectorXd adj = sens_.R.transpose() * diff;
        InnerPoint pt;
        if (regime_ == Regime::Balanced)
            pt = respond(pin_mu(adj), adj);
        else
            pt = respond(regime_ == Regime::Import ? tariff_.pi_plus : tariff_.pi_minus, adj);
        const Eigen::VectorXd RZ = sens_.R * pt.Z_bus;
        pt.c_up = -RZ - sens_.v_upper;
        pt.c_lo = RZ - sens_.v_lower;
        pt.dual_value = pt.utility_sum - pt.price * pt.Z0 - eta.head(B_).dot(pt.c_up) -
                        eta.tail(B_).dot(pt.c_lo);
        return pt;
    }

    const SensitivityMatrices& sens_;
    const std::vector<Prosumer>& prosumers_;
    const Tariff& tariff_;
    Regime regime_;
    const SolveOptions& opts_;
    int B_;
    double G0_ = 0.0;
    double price_floor_ = 0.0;  ///< below it every device sits at d_hi
    double price_ceil_ = 0.0;   ///< above it every device sits at d_lo
    double step0_ = 1.0;
};

MarketSolution SubproblemSolver::run() {
    const int m = 2 * B_;
    Eigen::VectorXd eta = Eigen::VectorXd::Zero(m);
    InnerPoint pt = evaluate(eta);

    auto grad_of = [&](const InnerPoint& q) {
        Eigen::VectorXd g(m);
        g.head(B_) = -q.c_up;
        g.tail(B_) = -q.c_lo;
        return g;
    };
    auto violation = [](const InnerPoint& q) {
        return std::max({q.c_up.maxCoeff(), q.c_lo.maxCoeff(), 0.0});
    };
    auto complementarity = [&](const Eigen::VectorXd& e, const InnerPoint& q) {
        double c = 0.0;
        for (int i = 0; i < B_; ++i) {
            c = std::max(c, std::abs(e[i] * q.c_up[i]));
            c = std::max(c, std::abs(e[B_ + i] * q.c_lo[i]));
        }
        return c;
    };

    // Spectral projected descent on the dual with a nonmonotone (last-10)
    // acceptance rule; the dual is convex and piecewise quadratic, so
    // Barzilai-Borwein steps settle onto the active face quickly.
    Eigen::VectorXd grad = grad_of(pt);
    double step = step0_;
    std::deque<double> recent{pt.dual_value};

    bool found = false;
    Eigen::VectorXd best_eta;
    double best_norm = std::numeric_limits<double>::infinity();
    int polish_left = -1;
    int stalls = 0;
    int iters = 0;
    double viol = violation(pt), comp = complementarity(eta, pt);

    for (int k = 0; k < opts_.max_outer; ++k) {
        iters = k;
        if (opts_.trace) {
            TracePoint tp;
            tp.regime = regime_;
            tp.iteration = k;
            tp.dual_residual = (eta - (eta - grad).cwiseMax(0.0)).lpNorm<Eigen::Infinity>();
            tp.primal_residual = viol;
            tp.welfare = pt.utility_sum - pt.price * pt.Z0;
            opts_.trace(tp);
        }
        if (viol < opts_.primal_tol && comp < opts_.comp_tol) {
            const double norm = eta.norm();
            if (norm < best_norm) {
                best_norm = norm;
                best_eta = eta;
                found = true;
            }
            // Converged; spend a few more iterations looking for a
            // smaller-norm dual on the optimal face, then stop.
            if (polish_left < 0) polish_left = 50;
        }
        if (polish_left == 0) break;
        if (polish_left > 0) --polish_left;

        const Eigen::VectorXd dir = (eta - step * grad).cwiseMax(0.0) - eta;
        const double gtd = grad.dot(dir);
        if (dir.lpNorm<Eigen::Infinity>() < 1e-16 * (1.0 + eta.norm()) || gtd >= 0.0) {
            if (found) break;
            if (++stalls >= 3) break;
            step = step0_;
            continue;
        }

        const double ref = *std::max_element(recent.begin(), recent.end());
        double t = 1.0;
        Eigen::VectorXd eta_new;
        InnerPoint cand;
        bool moved = false;
        while (t >= 1e-14) {
            eta_new = eta + t * dir;
            cand = evaluate(eta_new);
            if (cand.dual_value <= ref + 1e-4 * t * gtd) {
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if (!moved) {
            if (found) break;
            if (++stalls >= 3) break;
            step = step0_;
            continue;
        }
        stalls = 0;

        const Eigen::VectorXd g_new = grad_of(cand);
        const Eigen::VectorXd dy = g_new - grad;
        const Eigen::VectorXd ds = eta_new - eta;
        const double sy = ds.dot(dy);
        // sy <= 0 means the dual is locally linear along the step: either a
        // piecewise-linear fringe (feasible, the line search will rein the
        // step back in) or an unbounded ray (infeasible). Growing the step
        // geometrically lets the eta cap detect the latter quickly.
        step = sy > 1e-30 ? std::clamp(ds.squaredNorm() / sy, 1e-6 * step0_, 1e6 * step0_)
                          : std::min(step * 10.0, 1e12 * step0_);

        eta = std::move(eta_new);
        pt = std::move(cand);
        grad = g_new;
        viol = violation(pt);
        comp = complementarity(eta, pt);
        recent.push_back(pt.dual_value);
        if (recent.size() > 10) recent.pop_front();

        if (eta.lpNorm<Eigen::Infinity>() > kEtaCap)
            throw Infeasible(std::string(regime_name(regime_)) +
                             " subproblem: dual variables diverged, voltage bounds unreachable"
                             " (violation " +
                             std::to_string(viol) + ")");
    }

    if (!found)
        throw SolverDiverged(std::string(regime_name(regime_)) + " subproblem: no convergence in " +
                             std::to_string(iters + 1) + " iterations (primal residual " +
                             std::to_string(viol) + ", complementarity " + std::to_string(comp) +
                             ")");

    eta = best_eta;
    pt = evaluate(eta);
    MarketSolution sol;
    sol.d = std::move(pt.d);
    sol.z = std::move(pt.z);
    sol.Z_bus = std::move(pt.Z_bus);
    sol.Z0 = pt.Z0;
    sol.eta_up = eta.head(B_);
    sol.eta_lo = eta.tail(B_);
    if (regime_ == Regime::Balanced) sol.mu = pt.price;
    sol.regime = regime_;
    sol.welfare = pt.utility_sum - nem_cost(tariff_, pt.Z0);
    sol.stats.iterations = iters + 1;
    sol.stats.primal_residual = violation(pt);
    sol.stats.comp_residual = complementarity(eta, pt);
    sol.stats.converged = true;
    return sol;
}

}  // namespace

MarketSolution solve_subproblem(const SensitivityMatrices& sens,
                                const std::vector<Prosumer>& prosumers, const Tariff& tariff,
                                Regime regime, const SolveOptions& opts) {
    return SubproblemSolver(sens, prosumers, tariff, regime, opts).run();
}

CentralSolution solve_central(const SensitivityMatrices& sens,
                              const std::vector<Prosumer>& prosumers, const Tariff& tariff,
                              const SolveOptions& opts) {
    CentralSolution out;
    std::string failures;
    auto attempt = [&](Regime r) -> std::optional<MarketSolution> {
        try {
            return solve_subproblem(sens, prosumers, tariff, r, opts);
        } catch (const EnvelopeInfeasible&) {
            throw;  // a broken prosumer record fails every regime identically
        } catch (const TopologyError&) {
            throw;
        } catch (const DimensionError&) {
            throw;
        } catch (const DomainError&) {
            throw;
        } catch (const Error& e) {
            // Per-regime solver outcomes (infeasibility, divergence) are
            // collected; another regime may still clear.
            if (!failures.empty()) failures += "; ";
            failures += e.what();
            return std::nullopt;
        }
    };
    out.import_sol = attempt(Regime::Import);
    out.balanced_sol = attempt(Regime::Balanced);
    out.export_sol = attempt(Regime::Export);

    // Candidates in tie-break priority order; a later candidate must win by
    // a clear welfare margin to displace an earlier one.
    const MarketSolution* best = nullptr;
    auto consider = [&](const std::optional<MarketSolution>& s, bool sign_ok) {
        if (!s || !sign_ok) return;
        if (!best || s->welfare > best->welfare + 1e-12 * std::max(1.0, std::abs(s->welfare)))
            best = &*s;
    };
    consider(out.balanced_sol, true);
    consider(out.import_sol, out.import_sol && out.import_sol->Z0 >= -1e-9);
    consider(out.export_sol, out.export_sol && out.export_sol->Z0 <= 1e-9);

    if (!best)
        throw Infeasible("no sign-consistent regime solution" +
                         (failures.empty() ? std::string() : ": " + failures));
    out.solution = *best;
    return out;
}

KktReport verify_kkt(const MarketSolution& sol, const SensitivityMatrices& sens,
                     const std::vector<Prosumer>& prosumers, const Tariff& tariff, double tol) {
    const int B = sens.size();
    const double inf = std::numeric_limits<double>::infinity();
    KktReport rep;

    double base_price;
    switch (sol.regime) {
        case Regime::Import: base_price = tariff.pi_plus; break;
        case Regime::Export: base_price = tariff.pi_minus; break;
        default:
            if (!sol.mu) throw DomainError("balanced solution carries no mu");
            base_price = *sol.mu;
    }
    const Eigen::VectorXd adj = sens.R.transpose() * (sol.eta_up - sol.eta_lo);

    // Primal feasibility: voltage bounds plus internal consistency of the
    // solution record itself.
    const Eigen::VectorXd RZ = sens.R * sol.Z_bus;
    const Eigen::VectorXd c_up = -RZ - sens.v_upper;
    const Eigen::VectorXd c_lo = RZ - sens.v_lower;
    rep.primal = std::max({c_up.maxCoeff(), c_lo.maxCoeff(), 0.0});
    rep.primal = std::max(rep.primal, (sol.Z_bus - accumulate_bus(prosumers, sol.z, B))
                                          .lpNorm<Eigen::Infinity>());
    rep.primal = std::max(rep.primal, std::abs(sol.Z0 - sol.z.sum()));
    if (sol.regime == Regime::Balanced) rep.primal = std::max(rep.primal, std::abs(sol.Z0));

    rep.dual = std::max({0.0, -sol.eta_up.minCoeff(), -sol.eta_lo.minCoeff()});

    for (int i = 0; i < B; ++i) {
        rep.complementarity = std::max(rep.complementarity, std::abs(sol.eta_up[i] * c_up[i]));
        rep.complementarity = std::max(rep.complementarity, std::abs(sol.eta_lo[i] * c_lo[i]));
    }

    // Stationarity, clip-aware: each device pins an interval of admissible
    // effective prices; the envelope multiplier can only push the posted
    // price toward the side its binding boundary allows.
    for (size_t n = 0; n < prosumers.size(); ++n) {
        const Prosumer& p = prosumers[n];
        const Eigen::VectorXd& d = sol.d[n];
        const double chi = base_price - adj[p.bus - 1];

        double lo = -inf, hi = inf;
        for (size_t k = 0; k < p.devices.size(); ++k) {
            const DeviceUtility& dev = p.devices[k];
            rep.primal = std::max({rep.primal, dev.d_lo - d[k], d[k] - dev.d_hi});
            // Derivative of the capped utility: zero past the satiation
            // point, so effective prices <= 0 admit a box-filled device.
            const double marginal = std::max(0.0, dev.alpha - dev.beta * d[k]);
            const bool at_hi = d[k] >= dev.d_hi - 1e-11;
            const bool at_lo = d[k] <= dev.d_lo + 1e-11;
            if (at_hi && at_lo) continue;
            if (at_hi)
                hi = std::min(hi, marginal);
            else if (at_lo)
                lo = std::max(lo, marginal);
            else {
                hi = std::min(hi, marginal);
                lo = std::max(lo, marginal);
            }
        }

        double a_lo = chi, a_hi = chi;
        if (p.envelope) {
            rep.primal = std::max({rep.primal, sol.z[n] - p.envelope->z_hi,
                                   p.envelope->z_lo - sol.z[n]});
            const bool at_zhi = sol.z[n] >= p.envelope->z_hi - 1e-11;
            const bool at_zlo = sol.z[n] <= p.envelope->z_lo + 1e-11;
            if (at_zhi) a_hi = inf;
            if (at_zlo) a_lo = -inf;
        }
        rep.primal = std::max(rep.primal, std::abs(sol.z[n] - (d.sum() - p.g)));
        rep.stationarity = std::max({rep.stationarity, 0.0, lo - hi, a_lo - hi, lo - a_hi});
    }

    rep.max_residual =
        std::max({rep.primal, rep.dual, rep.complementarity, rep.stationarity});
    rep.pass = rep.max_residual < tol;
    return rep;
}

}  // namespace gridshare
