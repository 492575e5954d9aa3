#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ginet {

inline constexpr std::size_t kNumFeatures = 3;  // current, voltage, temperature

/// One aggregated time slot of battery telemetry.
struct BatteryRecord {
  double timestamp = 0.0;    // seconds since cycle start
  double current = 0.0;      // A, discharge negative
  double voltage = 0.0;      // V
  double temperature = 0.0;  // degC
  double amp_hours = 0.0;    // cumulative Ah, 0 at full charge
  double soc = 0.0;          // fraction in [0, 1]

  std::array<double, kNumFeatures> features() const { return {current, voltage, temperature}; }
};

struct Cycle {
  std::string id;
  double ambient_temperature = 0.0;
  std::string profile;
  std::vector<BatteryRecord> records;
};

/// Per-feature min/max of the training split.
struct NormStats {
  std::array<double, kNumFeatures> min{};
  std::array<double, kNumFeatures> max{};

  double scale(std::size_t feature, double value) const;
};

struct WindowSample {
  std::string cycle_id;
  std::size_t t_origin = 0;   // slot index of the first forecast slot
  double start_time = 0.0;    // timestamp of the first input slot
  std::vector<double> input;  // T_in x 3, row-major, normalized
  std::vector<double> target; // T_out, SoC fraction
};

/// Parses one raw CSV cycle file and mean-aggregates rows into slots.
Cycle parse_cycle_file(const std::filesystem::path& file, double slot_seconds);

/// Parses a single CSV file, or every *.csv in a directory (sorted by name).
std::vector<Cycle> parse_dataset(const std::filesystem::path& path, double slot_seconds);

/// Fills soc = clamp(1 + amp_hours / capacity, 0, 1).
Cycle derive_soc(Cycle cycle, double nominal_capacity_ah);

NormStats fit_normalize(const std::vector<Cycle>& train_cycles);

/// Rescales current/voltage/temperature; SoC is left untouched.
std::vector<Cycle> apply_normalize(const NormStats& stats, std::vector<Cycle> cycles);

/// Overlapping windows: input slots [t - t_in, t - 1], target slots [t, t + t_out - 1].
std::vector<WindowSample> make_windows(const Cycle& cycle, std::size_t t_in, std::size_t t_out,
                                       std::size_t stride = 1);

/// Number of windows make_windows produces for a cycle of `length` slots.
std::size_t window_count(std::size_t length, std::size_t t_in, std::size_t t_out, std::size_t stride = 1);

struct SplitRatio {
  std::size_t train = 10;
  std::size_t val = 2;
  std::size_t test = 5;
};

struct CycleSplit {
  std::vector<Cycle> train;
  std::vector<Cycle> val;
  std::vector<Cycle> test;
};

/// Split sizes for `n` cycles: largest-remainder rounding of the ratio, with
/// every part holding at least one cycle.
std::array<std::size_t, 3> split_sizes(std::size_t n, SplitRatio ratio);

/// Whole-cycle split, deterministic for a seed. Cycles are ordered by id
/// before shuffling so input order does not matter.
CycleSplit split_cycles(std::vector<Cycle> cycles, SplitRatio ratio, std::uint64_t seed);

/// As above, with the test set pinned to `test_ids`; the rest is split
/// between train and validation by the train:val part of the ratio.
CycleSplit split_cycles(std::vector<Cycle> cycles, SplitRatio ratio, std::uint64_t seed,
                        const std::vector<std::string>& test_ids);

}  // namespace ginet
