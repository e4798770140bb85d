#include "gridshare/prosumer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gridshare/errors.hpp"

namespace gridshare {

namespace {

double device_utility(const DeviceUtility& dev, double d) {
    if (d > dev.alpha / dev.beta) return dev.alpha * dev.alpha / (2.0 * dev.beta);
    return dev.alpha * d - 0.5 * dev.beta * d * d;
}

double clip(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

}  // namespace

double utility(const Prosumer& p, const Eigen::VectorXd& d) {
    if (d.size() != static_cast<Eigen::Index>(p.devices.size()))
        throw DimensionError("schedule has " + std::to_string(d.size()) + " entries, prosumer " +
                             std::to_string(p.id) + " has " + std::to_string(p.devices.size()) +
                             " devices");
    double total = 0.0;
    for (size_t k = 0; k < p.devices.size(); ++k) {
        if (d[k] < 0.0)
            throw DomainError("negative consumption for device " + std::to_string(k) +
                              " of prosumer " + std::to_string(p.id));
        total += device_utility(p.devices[k], d[k]);
    }
    return total;
}

double inverse_marginal(const DeviceUtility& dev, double price) {
    return (dev.alpha - price) / dev.beta;
}

ConsumptionBundle best_response(const Prosumer& p, double price) {
    ConsumptionBundle out;
    out.d.resize(p.devices.size());
    for (size_t k = 0; k < p.devices.size(); ++k) {
        const DeviceUtility& dev = p.devices[k];
        // Utility is flat beyond alpha/beta, so a subsidy (negative price)
        // makes filling the box strictly better than the quadratic
        // stationary point.
        out.d[k] = price < 0.0 ? dev.d_hi
                               : clip(inverse_marginal(dev, price), dev.d_lo, dev.d_hi);
    }
    out.z = out.d.sum() - p.g;
    return out;
}

Eigen::VectorXd split_at_equal_marginal(const std::vector<DeviceUtility>& devices,
                                        double target_total) {
    double lo_total = 0.0, hi_total = 0.0;
    double lam_lo = devices[0].alpha - devices[0].beta * devices[0].d_hi;
    double lam_hi = devices[0].alpha - devices[0].beta * devices[0].d_lo;
    for (const DeviceUtility& dev : devices) {
        lo_total += dev.d_lo;
        hi_total += dev.d_hi;
        lam_lo = std::min(lam_lo, dev.alpha - dev.beta * dev.d_hi);
        lam_hi = std::max(lam_hi, dev.alpha - dev.beta * dev.d_lo);
    }
    if (target_total < lo_total - 1e-9 || target_total > hi_total + 1e-9)
        throw DomainError("split target " + std::to_string(target_total) +
                          " outside device box sum");

    // Aggregate consumption at a shared marginal utility lambda is
    // non-increasing in lambda; bisect it onto the target.
    Eigen::VectorXd d(devices.size());
    auto eval = [&](double lam) {
        double total = 0.0;
        for (size_t k = 0; k < devices.size(); ++k) {
            d[k] = clip(inverse_marginal(devices[k], lam), devices[k].d_lo, devices[k].d_hi);
            total += d[k];
        }
        return total;
    };
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lam_lo + lam_hi);
        if (eval(mid) >= target_total)
            lam_lo = mid;
        else
            lam_hi = mid;
        if (lam_hi - lam_lo < 1e-15 * std::max(1.0, std::abs(lam_lo))) break;
    }
    double residual = target_total - eval(0.5 * (lam_lo + lam_hi));

    // Absorb the leftover rounding into devices with box slack so the
    // aggregate matches the target exactly.
    for (size_t k = 0; k < devices.size() && residual != 0.0; ++k) {
        const double room =
            residual > 0.0 ? devices[k].d_hi - d[k] : devices[k].d_lo - d[k];
        const double step = residual > 0.0 ? std::min(residual, room) : std::max(residual, room);
        d[k] += step;
        residual -= step;
    }
    return d;
}

ConsumptionBundle best_response_enveloped(const Prosumer& p, double price) {
    if (!p.envelope) return best_response(p, price);
    const Envelope& env = *p.envelope;

    double lo_total = 0.0, hi_total = 0.0;
    for (const DeviceUtility& dev : p.devices) {
        lo_total += dev.d_lo;
        hi_total += dev.d_hi;
    }
    if (env.z_lo + p.g > hi_total || env.z_hi + p.g < lo_total)
        throw EnvelopeInfeasible("prosumer " + std::to_string(p.id) +
                                 ": envelope cannot be met by the device box");

    ConsumptionBundle out = best_response(p, price);
    const double total = out.d.sum();
    double pinned_z;
    if (total > env.z_hi + p.g)
        pinned_z = env.z_hi;
    else if (total < env.z_lo + p.g)
        pinned_z = env.z_lo;
    else
        return out;

    out.d = split_at_equal_marginal(p.devices, pinned_z + p.g);
    out.z = pinned_z;
    return out;
}

double surplus(const Prosumer& p, const Eigen::VectorXd& d, double payment) {
    return utility(p, d) - payment;
}

double consumption_total_at_price(const Prosumer& p, double price) {
    return best_response_enveloped(p, price).d.sum();
}

}  // namespace gridshare
