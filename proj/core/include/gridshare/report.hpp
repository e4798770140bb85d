#pragma once

#include <string>
#include <vector>

#include "gridshare/scenario.hpp"

namespace gridshare {

/// Formats a double with 12 significant digits (%.12g). All CSV emission
/// goes through this so reruns are byte-identical.
std::string format_number(double v);

/// Columns: prosumer_id, bus, z_kwh, bus_price, ex_ante_charge, allocation,
/// final_payment. Re-checks profit neutrality and payment uniformity before
/// writing and throws EquilibriumViolation if either fails.
void write_settlement_csv(const std::string& path, const RunResult& r);

/// Columns: bus, price, eta_up, eta_lo.
void write_schedule_csv(const std::string& path, const RunResult& r);

/// Columns: bus, v2_linear_pu2, v2_exact_pu2, v_linear_pu, v_exact_pu.
/// Exact columns are empty when the exact solve was disabled.
void write_voltages_csv(const std::string& path, const RunResult& r);

/// One row per solver iterate: iteration, dual_residual, primal_residual,
/// welfare. Written per regime into trace_<regime>.csv under dir.
void write_trace_csv(const std::string& dir, const RunResult& r);

/// Combined sweep curve: g_scale, G0_kwh, Z0_kwh, sigma1_kwh, sigma2_kwh,
/// regime, price_min_usd_per_kwh, price_max_usd_per_kwh, welfare_usd, error.
void write_sweep_csv(const std::string& path, const std::vector<SweepEntry>& entries);

/// Machine-readable run summary (welfare, regime, thresholds, residuals,
/// settlement checks, calibration provenance of the scenario).
void write_summary_json(const std::string& path, const Scenario& sc, const RunResult& r);

/// Writes settlement, schedule, voltages, summary (and traces when present)
/// under out_dir, creating it if needed.
void write_run_outputs(const std::string& out_dir, const Scenario& sc, const RunResult& r);

}  // namespace gridshare
