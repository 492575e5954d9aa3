#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ginet/battery_data.hpp"
#include "ginet/model.hpp"

namespace ginet {

struct TrainConfig {
  std::size_t batch_size = 32;
  double lr = 1e-4;
  std::size_t max_epochs = 20;
  std::size_t patience = 3;
  double lr_decay = 0.5;
  bool scheduler = true;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
  /// Learning rate for a 1-based epoch: lr * lr_decay^(epoch - 1) with the
  /// scheduler on, lr otherwise.
  double lr_at(std::size_t epoch) const;
};

struct DataConfig {
  double slot_seconds = 1.0;
  std::size_t stride = 1;
  double capacity_ah = 2.9;
  SplitRatio ratio;
  std::vector<std::string> test_cycles;
};

/// Effective configuration of a run: data, model and training settings,
/// read from flat key=value text. Unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  GiNetConfig model;
  TrainConfig train;

  RunConfig();

  /// Applies one key. Throws ConfigError naming the key on unknown keys or
  /// bad values.
  void set(const std::string& key, const std::string& value);
  /// Re-derives dependent fields (seeds, label_len when not pinned,
  /// slot_seconds) and validates.
  void finalize();

  /// Canonical key=value text, one key per line in a fixed order.
  std::string to_text() const;
  /// 16 hex digits of FNV-1a over to_text().
  std::string digest() const;

  static std::vector<std::string> keys();

 private:
  bool label_len_pinned_ = false;
};

/// Parses key=value lines (# comments, blank lines allowed) into `config`.
void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin = "config");
void apply_config_file(RunConfig& config, const std::filesystem::path& file);

std::string fnv1a_hex(const std::string& text);

}  // namespace ginet
