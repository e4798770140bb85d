#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

namespace gridshare {

/// Capped quadratic device utility: alpha d - beta d^2 / 2 on [0, alpha/beta],
/// flat at alpha^2 / (2 beta) beyond the cap. Consumption is further limited
/// to the device box [d_lo, d_hi].
struct DeviceUtility {
    double alpha = 0.0;
    double beta = 0.0;  ///< must be > 0
    double d_lo = 0.0;
    double d_hi = 0.0;
};

/// Bounds on a prosumer's net consumption z = 1^T d - g.
struct Envelope {
    double z_lo = 0.0;
    double z_hi = 0.0;
};

struct Prosumer {
    int id = 0;
    int bus = 0;  ///< bus the prosumer is metered at (1..B)
    std::vector<DeviceUtility> devices;
    double g = 0.0;  ///< behind-the-meter generation (kWh, non-negative)
    std::optional<Envelope> envelope;
};

/// A prosumer's device schedule and the implied net consumption.
struct ConsumptionBundle {
    Eigen::VectorXd d;
    double z = 0.0;  ///< 1^T d - g
};

/// Total utility of a schedule. Throws DimensionError when d does not match
/// the device count, DomainError on negative entries.
double utility(const Prosumer& p, const Eigen::VectorXd& d);

/// Inverse marginal utility of device k: (alpha_k - price) / beta_k,
/// defined for every real price.
double inverse_marginal(const DeviceUtility& dev, double price);

/// Device-separable best response to a uniform price: each device consumes
/// clip(inverse_marginal, [d_lo, d_hi]). At negative prices the capped
/// utility is flat past alpha/beta, so every device fills to d_hi.
ConsumptionBundle best_response(const Prosumer& p, double price);

/// Best response with envelope enforcement: when the box response violates
/// [z_lo, z_hi], the aggregate is pinned to the crossed boundary and split
/// across devices at equal marginal utility. Throws EnvelopeInfeasible when
/// the device box cannot meet the envelope at all.
ConsumptionBundle best_response_enveloped(const Prosumer& p, double price);

/// Net surplus: utility(d) - payment.
double surplus(const Prosumer& p, const Eigen::VectorXd& d, double payment);

/// Total consumption 1^T d of the (envelope-aware) best response at a price.
double consumption_total_at_price(const Prosumer& p, double price);

/// Splits a target aggregate consumption across devices at a shared marginal
/// utility, each device clipped to its box. Target must lie within the summed
/// boxes. Used by envelope enforcement and the balanced-regime solver.
Eigen::VectorXd split_at_equal_marginal(const std::vector<DeviceUtility>& devices,
                                        double target_total);

}  // namespace gridshare
