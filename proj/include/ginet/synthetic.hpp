#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ginet/battery_data.hpp"

namespace ginet {

/// Battery-like synthetic cycles for tests and demos.
///
/// Each cycle starts at a random SoC and is driven by a piecewise-constant
/// current profile (mostly discharge, occasional regenerative pulses).
/// Coulomb counting advances SoC; voltage is a monotone open-circuit curve in
/// SoC plus a temperature-dependent ohmic drop, a first-order polarization
/// term, and Gaussian sensor noise. Temperature follows ambient plus I^2
/// self-heating. amp_hours is written so that derive_soc() recovers the SoC.
struct SyntheticOptions {
  std::size_t n_cycles = 20;
  double duration_s = 600.0;
  double sample_rate_hz = 10.0;
  double capacity_ah = 2.9;
  double voltage_noise = 0.005;
};

std::vector<Cycle> generate_synthetic_cycles(const SyntheticOptions& options, std::uint64_t seed);

/// Writes raw rows in the ingestion CSV format (timestamp_s, voltage_V, ...).
void write_cycle_csv(const Cycle& cycle, const std::filesystem::path& file);

/// Open-circuit voltage curve used by the generator.
double synthetic_ocv(double soc);

}  // namespace ginet
