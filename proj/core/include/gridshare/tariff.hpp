#pragma once

namespace gridshare {

/// Net-energy-metering tariff. Requires pi_plus >= pi_minus >= 0.
struct Tariff {
    double pi_plus = 0.0;   ///< retail (import) rate, $/kWh
    double pi_minus = 0.0;  ///< sell (export) rate, $/kWh
};

/// Marginal NEM rate at coalition net consumption Z0; the import rate
/// applies at Z0 == 0.
inline double nem_price(const Tariff& t, double Z0) {
    return Z0 >= 0.0 ? t.pi_plus : t.pi_minus;
}

/// NEM cost of net consumption Z0: nem_price(t, Z0) * Z0.
inline double nem_cost(const Tariff& t, double Z0) { return nem_price(t, Z0) * Z0; }

}  // namespace gridshare
