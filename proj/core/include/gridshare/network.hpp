#pragma once

#include <Eigen/Core>
#include <vector>

namespace gridshare {

/// A non-slack bus. Ids are contiguous 1..B; the slack bus is always 0 and
/// never appears in the bus list. Vectors indexed by bus use slot id-1.
struct Bus {
    int id = 0;
    double q = 0.0;  ///< fixed reactive consumption (p.u.)
};

/// Oriented distribution line, pointing away from the slack bus.
struct Line {
    int from = 0;
    int to = 0;
    double r = 0.0;  ///< resistance (p.u.)
    double x = 0.0;  ///< reactance (p.u.)
};

/// Radial feeder: a tree of B buses rooted at the slack bus 0.
struct RadialNetwork {
    std::vector<Bus> buses;
    std::vector<Line> lines;
    double v0 = 1.0;     ///< slack voltage magnitude (p.u.)
    double v_min = 0.0;  ///< lower voltage magnitude bound (p.u.)
    double v_max = 0.0;  ///< upper voltage magnitude bound (p.u.)

    int size() const { return static_cast<int>(buses.size()); }

    /// Reactive consumption as a vector over buses 1..B.
    Eigen::VectorXd reactive_vector() const;
};

/// Linearized voltage sensitivities of a radial feeder.
///
/// Squared voltages are affine in the bus net-consumption vector Z:
///   v = -R Z + v_hat,   v_hat = -X q + v0^2 1,
/// where R_ij (X_ij) is twice the summed resistance (reactance) on the
/// common root path of buses i and j. The reformulated bounds are
///   -v_lower <= -R Z <= v_upper,
/// with v_upper = v_max^2 1 - v_hat and v_lower = v_hat - v_min^2 1.
struct SensitivityMatrices {
    Eigen::MatrixXd R;
    Eigen::MatrixXd X;
    Eigen::VectorXd v_hat;
    Eigen::VectorXd v_upper;
    Eigen::VectorXd v_lower;

    int size() const { return static_cast<int>(R.rows()); }
};

/// Builds R, X and the squared-voltage offsets for a radial feeder.
/// Throws TopologyError when the line set is not a spanning tree oriented
/// away from bus 0, DomainError on negative impedances or non-finite q.
SensitivityMatrices build_sensitivities(const RadialNetwork& net);

/// Rescales the consumption axis of the sensitivities so that voltage
/// formulas accept energies in kWh instead of p.u.: R and X are divided by
/// s_base_kva (one-hour netting period). Offsets are unchanged.
SensitivityMatrices with_energy_base(const SensitivityMatrices& sens, double s_base_kva);

/// Squared voltages under the linearized model: -R Z + v_hat.
Eigen::VectorXd lin_voltages(const SensitivityMatrices& sens, const Eigen::VectorXd& Z);

/// Squared voltages from the exact branch-flow equations, solved by a
/// backward/forward sweep with loss terms. Z and q are in p.u.
Eigen::VectorXd exact_voltages(const RadialNetwork& net, const Eigen::VectorXd& Z,
                               double tol_pf = 1e-10, int max_iter = 200);

/// Per-bus verdict of the reformulated voltage bounds at consumption Z.
struct BusFeasibility {
    int bus = 0;
    double value = 0.0;        ///< -(R Z)_i
    double upper_slack = 0.0;  ///< v_upper_i - value (>= -tol when feasible)
    double lower_slack = 0.0;  ///< value + v_lower_i (>= -tol when feasible)
    bool feasible = true;
};

struct VoltageFeasibility {
    bool all_feasible = true;
    std::vector<BusFeasibility> buses;
};

/// Checks -v_lower - tol <= -R Z <= v_upper + tol per bus (closed intervals).
VoltageFeasibility check_voltage_feasibility(const SensitivityMatrices& sens,
                                             const Eigen::VectorXd& Z, double tol = 1e-7);

}  // namespace gridshare
