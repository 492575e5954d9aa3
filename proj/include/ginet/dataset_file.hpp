#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ginet/battery_data.hpp"

namespace ginet {

struct PrepareOptions {
  std::size_t t_in = 100;
  std::size_t t_out = 10;
  std::size_t stride = 1;
  double capacity_ah = 2.9;
  SplitRatio ratio;
  std::uint64_t seed = 0;
  std::vector<std::string> test_cycles;
};

struct Provenance {
  std::string source;
  std::size_t t_in = 0;
  std::size_t t_out = 0;
  std::size_t stride = 1;
  double slot_seconds = 1.0;
  double capacity_ah = 2.9;
  std::uint64_t seed = 0;
  std::string config_text;
  std::string config_digest;
};

/// Windows for all three splits plus the training normalization statistics.
struct PreparedDataset {
  Provenance provenance;
  NormStats norm;
  std::vector<std::string> train_ids, val_ids, test_ids;
  std::vector<WindowSample> train, val, test;
};

/// derive_soc -> split by cycle -> fit normalization on train -> normalize
/// all splits -> windows.
PreparedDataset prepare_dataset(std::vector<Cycle> cycles, const PrepareOptions& options);

/// Binary container; see docs/formats.md.
void save_prepared_dataset(const PreparedDataset& dataset, const std::filesystem::path& file);
PreparedDataset load_prepared_dataset(const std::filesystem::path& file);

}  // namespace ginet
