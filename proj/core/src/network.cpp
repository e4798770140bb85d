#include "gridshare/network.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "gridshare/errors.hpp"

namespace gridshare {

namespace {

/// Parent structure of a validated radial feeder. Arrays are indexed by bus
/// id; slot 0 (the slack bus) is unused except as a parent.
struct Tree {
    std::vector<int> parent;   ///< parent[b] = feeding bus of b, b in 1..B
    std::vector<int> line_of;  ///< line_of[b] = index of the line ending at b
    std::vector<int> order;    ///< bus ids in root-to-leaf (BFS) order
};

Tree validate_tree(const RadialNetwork& net) {
    const int B = net.size();
    if (B == 0) throw TopologyError("network has no buses");
    if (!(std::isfinite(net.v0) && net.v0 > 0.0))
        throw DomainError("slack voltage v0 must be positive and finite");
    if (!(std::isfinite(net.v_min) && std::isfinite(net.v_max) && 0.0 < net.v_min &&
          net.v_min < net.v_max))
        throw DomainError("voltage bounds must satisfy 0 < v_min < v_max");

    std::vector<char> seen(B + 1, 0);
    for (const Bus& b : net.buses) {
        if (b.id < 1 || b.id > B)
            throw TopologyError("bus id " + std::to_string(b.id) + " outside 1.." +
                                std::to_string(B));
        if (seen[b.id]) throw TopologyError("duplicate bus id " + std::to_string(b.id));
        seen[b.id] = 1;
        if (!std::isfinite(b.q))
            throw DomainError("non-finite reactive load at bus " + std::to_string(b.id));
    }

    if (static_cast<int>(net.lines.size()) != B)
        throw TopologyError("radial feeder needs exactly " + std::to_string(B) + " lines, got " +
                            std::to_string(net.lines.size()));

    Tree t;
    t.parent.assign(B + 1, -1);
    t.line_of.assign(B + 1, -1);
    for (int l = 0; l < B; ++l) {
        const Line& ln = net.lines[l];
        if (ln.from < 0 || ln.from > B || ln.to < 1 || ln.to > B)
            throw TopologyError("line " + std::to_string(ln.from) + "->" + std::to_string(ln.to) +
                                " references unknown bus");
        if (!(std::isfinite(ln.r) && std::isfinite(ln.x) && ln.r >= 0.0 && ln.x >= 0.0))
            throw DomainError("line " + std::to_string(ln.from) + "->" + std::to_string(ln.to) +
                              " has negative or non-finite impedance");
        if (t.parent[ln.to] != -1)
            throw TopologyError("bus " + std::to_string(ln.to) + " is fed by two lines");
        t.parent[ln.to] = ln.from;
        t.line_of[ln.to] = l;
    }

    std::vector<std::vector<int>> children(B + 1);
    for (int b = 1; b <= B; ++b) children[t.parent[b]].push_back(b);

    t.order.reserve(B);
    std::vector<int> queue{0};
    for (size_t h = 0; h < queue.size(); ++h) {
        for (int c : children[queue[h]]) {
            t.order.push_back(c);
            queue.push_back(c);
        }
    }
    if (static_cast<int>(t.order.size()) != B)
        throw TopologyError("feeder graph is not a tree rooted at bus 0");
    return t;
}

}  // namespace

Eigen::VectorXd RadialNetwork::reactive_vector() const {
    Eigen::VectorXd q = Eigen::VectorXd::Zero(size());
    for (const Bus& b : buses) q[b.id - 1] = b.q;
    return q;
}

SensitivityMatrices build_sensitivities(const RadialNetwork& net) {
    const Tree t = validate_tree(net);
    const int B = net.size();

    // Line membership of each bus's root path; entries of R and X are twice
    // the impedance sum over the intersected paths.
    std::vector<std::vector<char>> on_path(B + 1, std::vector<char>(B, 0));
    for (int b : t.order) {
        if (t.parent[b] != 0) on_path[b] = on_path[t.parent[b]];
        on_path[b][t.line_of[b]] = 1;
    }

    SensitivityMatrices s;
    s.R.setZero(B, B);
    s.X.setZero(B, B);
    for (int i = 1; i <= B; ++i) {
        for (int j = i; j <= B; ++j) {
            double r_sum = 0.0, x_sum = 0.0;
            for (int l = 0; l < B; ++l) {
                if (on_path[i][l] && on_path[j][l]) {
                    r_sum += net.lines[l].r;
                    x_sum += net.lines[l].x;
                }
            }
            s.R(i - 1, j - 1) = s.R(j - 1, i - 1) = 2.0 * r_sum;
            s.X(i - 1, j - 1) = s.X(j - 1, i - 1) = 2.0 * x_sum;
        }
    }

    s.v_hat = -s.X * net.reactive_vector() + Eigen::VectorXd::Constant(B, net.v0 * net.v0);
    s.v_upper = Eigen::VectorXd::Constant(B, net.v_max * net.v_max) - s.v_hat;
    s.v_lower = s.v_hat - Eigen::VectorXd::Constant(B, net.v_min * net.v_min);
    return s;
}

SensitivityMatrices with_energy_base(const SensitivityMatrices& sens, double s_base_kva) {
    if (!(std::isfinite(s_base_kva) && s_base_kva > 0.0))
        throw DomainError("s_base_kva must be positive");
    SensitivityMatrices out = sens;
    out.R /= s_base_kva;
    out.X /= s_base_kva;
    return out;
}

Eigen::VectorXd lin_voltages(const SensitivityMatrices& sens, const Eigen::VectorXd& Z) {
    if (Z.size() != sens.size())
        throw DimensionError("Z has " + std::to_string(Z.size()) + " entries, network has " +
                             std::to_string(sens.size()) + " buses");
    return -sens.R * Z + sens.v_hat;
}

Eigen::VectorXd exact_voltages(const RadialNetwork& net, const Eigen::VectorXd& Z, double tol_pf,
                               int max_iter) {
    const Tree t = validate_tree(net);
    const int B = net.size();
    if (Z.size() != B)
        throw DimensionError("Z has " + std::to_string(Z.size()) + " entries, network has " +
                             std::to_string(B) + " buses");

    const Eigen::VectorXd q = net.reactive_vector();
    // Indexed by bus id, slot 0 = slack. P/Q/ell describe the line feeding
    // that bus, measured at the sending (parent) end.
    std::vector<double> v2(B + 1, net.v0 * net.v0);
    std::vector<double> ell(B + 1, 0.0);
    std::vector<double> P(B + 1), Q(B + 1);

    for (int it = 0; it < max_iter; ++it) {
        // Backward: subtree power sums plus the loss on the feeding line.
        for (auto rit = t.order.rbegin(); rit != t.order.rend(); ++rit) {
            const int b = *rit;
            const Line& ln = net.lines[t.line_of[b]];
            P[b] = Z[b - 1] + ln.r * ell[b];
            Q[b] = q[b - 1] + ln.x * ell[b];
        }
        for (auto rit = t.order.rbegin(); rit != t.order.rend(); ++rit) {
            const int b = *rit;
            if (t.parent[b] != 0) {
                P[t.parent[b]] += P[b];
                Q[t.parent[b]] += Q[b];
            }
        }

        // Forward: voltage drops from the root, then refreshed currents.
        double delta = 0.0;
        for (int b : t.order) {
            const int p = t.parent[b];
            const Line& ln = net.lines[t.line_of[b]];
            const double next = v2[p] - 2.0 * (ln.r * P[b] + ln.x * Q[b]) +
                                (ln.r * ln.r + ln.x * ln.x) * ell[b];
            if (!std::isfinite(next) || next <= 0.0)
                throw PowerFlowDiverged("voltage collapse at bus " + std::to_string(b));
            delta = std::max(delta, std::abs(next - v2[b]));
            v2[b] = next;
            ell[b] = (P[b] * P[b] + Q[b] * Q[b]) / v2[p];
        }
        if (delta < tol_pf) {
            Eigen::VectorXd out(B);
            for (int b = 1; b <= B; ++b) out[b - 1] = v2[b];
            return out;
        }
    }
    throw PowerFlowDiverged("sweep did not settle in " + std::to_string(max_iter) + " iterations");
}

VoltageFeasibility check_voltage_feasibility(const SensitivityMatrices& sens,
                                             const Eigen::VectorXd& Z, double tol) {
    if (Z.size() != sens.size())
        throw DimensionError("Z has " + std::to_string(Z.size()) + " entries, network has " +
                             std::to_string(sens.size()) + " buses");
    const Eigen::VectorXd value = -sens.R * Z;
    VoltageFeasibility rep;
    rep.buses.reserve(sens.size());
    for (int i = 0; i < sens.size(); ++i) {
        BusFeasibility f;
        f.bus = i + 1;
        f.value = value[i];
        f.upper_slack = sens.v_upper[i] - value[i];
        f.lower_slack = value[i] + sens.v_lower[i];
        f.feasible = f.upper_slack >= -tol && f.lower_slack >= -tol;
        rep.all_feasible = rep.all_feasible && f.feasible;
        rep.buses.push_back(f);
    }
    return rep;
}

}  // namespace gridshare
