#include "ginet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "ginet/error.hpp"
#include "ginet/rng.hpp"

namespace ginet {

double synthetic_ocv(double soc) {
  return 3.2 + 0.8 * soc - 0.25 * std::exp(-15.0 * soc) + 0.15 * std::pow(soc, 8);
}

std::vector<Cycle> generate_synthetic_cycles(const SyntheticOptions& options, std::uint64_t seed) {
  if (options.n_cycles == 0 || !(options.duration_s > 0) || !(options.sample_rate_hz > 0) ||
      !(options.capacity_ah > 0)) {
    throw ConfigError("synthetic generator options must be positive");
  }
  static constexpr std::array<double, 4> kAmbient = {-10.0, 0.0, 10.0, 25.0};
  static constexpr std::array<const char*, 3> kProfiles = {"US06", "HWFET", "UDDS"};
  const double dt = 1.0 / options.sample_rate_hz;
  const auto n_samples = static_cast<std::size_t>(std::llround(options.duration_s * options.sample_rate_hz));

  std::vector<Cycle> cycles;
  for (std::size_t c = 0; c < options.n_cycles; ++c) {
    Rng rng(derive_seed(seed, c));
    Cycle cycle;
    char id[32];
    std::snprintf(id, sizeof(id), "synth_%03zu", c);
    cycle.id = id;
    cycle.ambient_temperature = kAmbient[c % kAmbient.size()];
    cycle.profile = kProfiles[c % kProfiles.size()];

    double soc = rng.uniform(0.35, 1.0);
    double temp = cycle.ambient_temperature;
    double polarization = 0.0;
    double level = 0.0;
    double segment_left = 0.0;
    // Aggressive profiles draw more current.
    const double max_draw = c % kProfiles.size() == 0 ? 6.0 : (c % kProfiles.size() == 1 ? 3.5 : 2.5);
    for (std::size_t i = 0; i < n_samples; ++i) {
      if (segment_left <= 0.0) {
        segment_left = rng.uniform(5.0, 30.0);
        level = rng.uniform() < 0.15 ? rng.uniform(0.5, 2.0) : -rng.uniform(0.5, max_draw);
      }
      segment_left -= dt;
      double current = level + 0.05 * rng.normal();
      if (soc < 0.05 && current < 0.0) current = 0.0;
      if (soc > 0.995 && current > 0.0) current = 0.0;

      soc = std::clamp(soc + current * dt / 3600.0 / options.capacity_ah, 0.0, 1.0);
      temp += dt * (0.02 * current * current - 0.01 * (temp - cycle.ambient_temperature));
      const double resistance = 0.05 * std::exp(-0.03 * (temp - 25.0));
      const double decay = std::exp(-dt / 20.0);
      polarization = polarization * decay + 0.02 * current * (1.0 - decay);
      const double voltage =
          synthetic_ocv(soc) + current * resistance + polarization + options.voltage_noise * rng.normal();

      BatteryRecord r;
      r.timestamp = static_cast<double>(i) * dt;
      r.current = current;
      r.voltage = voltage;
      r.temperature = temp + 0.05 * rng.normal();
      r.amp_hours = (soc - 1.0) * options.capacity_ah;
      r.soc = soc;
      cycle.records.push_back(r);
    }
    cycles.push_back(std::move(cycle));
  }
  return cycles;
}

void write_cycle_csv(const Cycle& cycle, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw ParseError("cannot write " + file.string());
  out << "timestamp_s,voltage_V,current_A,temperature_C,amp_hours_Ah\n";
  char line[160];
  for (const auto& r : cycle.records) {
    std::snprintf(line, sizeof(line), "%.3f,%.17g,%.17g,%.17g,%.17g\n", r.timestamp, r.voltage, r.current,
                  r.temperature, r.amp_hours);
    out << line;
  }
}

}  // namespace ginet
