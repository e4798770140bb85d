#pragma once

#include <string>
#include <vector>

#include "gridshare/network.hpp"
#include "gridshare/prosumer.hpp"

namespace gridshare {

/// Feeder file contents. When the file carries a `base` block, impedances
/// (ohm) and reactive loads (kvar) have been converted to p.u. on load and
/// the base is kept here so market energies in kWh can be mapped to p.u.
/// power over the one-hour netting period. Files without a base are taken
/// as already per-unit with s_base_kva = 1.
struct LoadedNetwork {
    RadialNetwork net;
    double s_base_kva = 1.0;
    double v_base_kv = 0.0;  ///< 0 when the file was per-unit
};

/// Parses a feeder JSON file: buses [{id, q}], lines [{from, to, r, x}],
/// slack {v0, v_min, v_max}, optional base {s_base_kva, v_base_kv}.
/// Throws ConfigError naming the offending field.
LoadedNetwork load_network(const std::string& path);

/// Record of a device expanded from a `calibrate` block: the slope is set
/// so the demand curve has elasticity -e at the anchor (pi0, d0), giving
/// beta = pi0 / (e d0) and alpha = pi0 + beta d0.
struct CalibrationNote {
    int prosumer_id = 0;
    int device_index = 0;
    double pi0 = 0.0, d0 = 0.0, elasticity = 0.0;
    double alpha = 0.0, beta = 0.0;
};

struct LoadedProsumers {
    std::vector<Prosumer> prosumers;
    std::vector<CalibrationNote> calibration;
};

/// Parses a prosumer JSON file: a list of {id, bus, g_kwh, envelope?,
/// devices}. Each device gives either {alpha, beta, d_lo, d_hi} directly or
/// {calibrate: {pi0, d0, elasticity}} (bounds default to [0, alpha/beta]).
/// Throws ConfigError on schema violations, including beta <= 0.
LoadedProsumers load_prosumers(const std::string& path);

}  // namespace gridshare
