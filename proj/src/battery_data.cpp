#include "ginet/battery_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <span>
#include <map>
#include <numeric>

#include "ginet/error.hpp"
#include "ginet/rng.hpp"

namespace ginet {

namespace {

constexpr std::array<const char*, 5> kColumns = {"timestamp_s", "voltage_V", "current_A",
                                                 "temperature_C", "amp_hours_Ah"};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_number(const std::string& field, const std::filesystem::path& file, std::size_t line_no) {
  double v = 0.0;
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw ParseError(file.string() + ":" + std::to_string(line_no) + ": invalid number '" + field + "'");
  }
  return v;
}

std::string profile_from_name(const std::string& stem) {
  static const std::array<const char*, 6> tags = {"US06", "HWFET", "UDDS", "LA92", "NN", "Cycle"};
  for (const char* tag : tags) {
    if (stem.find(tag) != std::string::npos) return tag;
  }
  return "unknown";
}

}  // namespace

double NormStats::scale(std::size_t feature, double value) const {
  const double range = max[feature] - min[feature];
  if (range <= 0.0) return 0.0;
  return (value - min[feature]) / range;
}

Cycle parse_cycle_file(const std::filesystem::path& file, double slot_seconds) {
  if (!(slot_seconds > 0.0)) throw ConfigError("slot_seconds must be positive");
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open " + file.string());

  std::string line;
  if (!std::getline(in, line)) throw ParseError(file.string() + ": empty file");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  const auto header = split_csv_line(line);
  std::array<std::size_t, kColumns.size()> col{};
  for (std::size_t c = 0; c < kColumns.size(); ++c) {
    auto it = std::find(header.begin(), header.end(), kColumns[c]);
    if (it == header.end()) {
      throw ParseError(file.string() + ": missing column '" + kColumns[c] + "'");
    }
    col[c] = static_cast<std::size_t>(it - header.begin());
  }

  Cycle cycle;
  cycle.id = file.stem().string();
  cycle.profile = profile_from_name(cycle.id);

  double t0 = 0.0;
  double prev_t = 0.0;
  bool first = true;
  std::int64_t slot = -1;
  std::array<double, 5> acc{};
  std::size_t count = 0;
  auto flush = [&] {
    if (count == 0) return;
    const double n = static_cast<double>(count);
    BatteryRecord r;
    r.timestamp = static_cast<double>(slot) * slot_seconds;
    r.voltage = acc[1] / n;
    r.current = acc[2] / n;
    r.temperature = acc[3] / n;
    r.amp_hours = acc[4] / n;
    cycle.records.push_back(r);
    acc = {};
    count = 0;
  };

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() < header.size()) {
      throw ParseError(file.string() + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields");
    }
    std::array<double, 5> v{};
    for (std::size_t c = 0; c < kColumns.size(); ++c) v[c] = parse_number(fields[col[c]], file, line_no);
    if (first) {
      t0 = v[0];
      first = false;
    } else if (!(v[0] > prev_t)) {
      throw DataError(file.string() + ":" + std::to_string(line_no) +
                      ": timestamps must be strictly increasing");
    }
    prev_t = v[0];
    // The epsilon keeps 10 Hz stamps like 0.1 * 10 in the intended slot.
    const auto s = static_cast<std::int64_t>(std::floor((v[0] - t0) / slot_seconds + 1e-9));
    if (s != slot) {
      flush();
      slot = s;
    }
    for (std::size_t c = 0; c < v.size(); ++c) acc[c] += v[c];
    ++count;
  }
  flush();
  if (cycle.records.empty()) throw InsufficientDataError(file.string() + ": no data rows");
  cycle.ambient_temperature = cycle.records.front().temperature;
  return cycle;
}

std::vector<Cycle> parse_dataset(const std::filesystem::path& path, double slot_seconds) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(path)) {
    for (const auto& entry : std::filesystem::directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else if (std::filesystem::exists(path)) {
    files.push_back(path);
  } else {
    throw ParseError("no such file or directory: " + path.string());
  }
  std::vector<Cycle> cycles;
  cycles.reserve(files.size());
  for (const auto& f : files) cycles.push_back(parse_cycle_file(f, slot_seconds));
  return cycles;
}

Cycle derive_soc(Cycle cycle, double nominal_capacity_ah) {
  if (!(nominal_capacity_ah > 0.0)) throw ConfigError("nominal capacity must be positive");
  for (auto& r : cycle.records) {
    r.soc = std::clamp(1.0 + r.amp_hours / nominal_capacity_ah, 0.0, 1.0);
  }
  return cycle;
}

NormStats fit_normalize(const std::vector<Cycle>& train_cycles) {
  NormStats stats;
  stats.min.fill(std::numeric_limits<double>::infinity());
  stats.max.fill(-std::numeric_limits<double>::infinity());
  bool any = false;
  for (const auto& c : train_cycles) {
    for (const auto& r : c.records) {
      const auto f = r.features();
      for (std::size_t k = 0; k < kNumFeatures; ++k) {
        stats.min[k] = std::min(stats.min[k], f[k]);
        stats.max[k] = std::max(stats.max[k], f[k]);
      }
      any = true;
    }
  }
  if (!any) throw InsufficientDataError("fit_normalize: no training records");
  return stats;
}

std::vector<Cycle> apply_normalize(const NormStats& stats, std::vector<Cycle> cycles) {
  for (auto& c : cycles) {
    for (auto& r : c.records) {
      r.current = stats.scale(0, r.current);
      r.voltage = stats.scale(1, r.voltage);
      r.temperature = stats.scale(2, r.temperature);
    }
  }
  return cycles;
}

std::size_t window_count(std::size_t length, std::size_t t_in, std::size_t t_out, std::size_t stride) {
  if (stride == 0) throw ConfigError("window stride must be positive");
  if (length < t_in + t_out) return 0;
  return (length - t_in - t_out) / stride + 1;
}

std::vector<WindowSample> make_windows(const Cycle& cycle, std::size_t t_in, std::size_t t_out,
                                       std::size_t stride) {
  if (t_in == 0 || t_out == 0) throw ConfigError("T_in and T_out must be positive");
  const std::size_t length = cycle.records.size();
  const std::size_t n = window_count(length, t_in, t_out, stride);
  std::vector<WindowSample> out;
  if (n == 0) {
    std::cerr << "warning: cycle '" << cycle.id << "' has " << length << " slots, fewer than T_in + T_out = "
              << t_in + t_out << "; no windows\n";
    return out;
  }
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t t = t_in + k * stride;
    WindowSample w;
    w.cycle_id = cycle.id;
    w.t_origin = t;
    w.start_time = cycle.records[t - t_in].timestamp;
    w.input.reserve(t_in * kNumFeatures);
    for (std::size_t s = t - t_in; s < t; ++s) {
      const auto f = cycle.records[s].features();
      w.input.insert(w.input.end(), f.begin(), f.end());
    }
    w.target.reserve(t_out);
    for (std::size_t s = t; s < t + t_out; ++s) w.target.push_back(cycle.records[s].soc);
    out.push_back(std::move(w));
  }
  return out;
}

std::array<std::size_t, 3> split_sizes(std::size_t n, SplitRatio ratio) {
  const std::array<std::size_t, 3> parts = {ratio.train, ratio.val, ratio.test};
  const std::size_t total = parts[0] + parts[1] + parts[2];
  if (total == 0 || parts[0] == 0 || parts[1] == 0 || parts[2] == 0) {
    throw ConfigError("split ratio parts must be positive");
  }
  if (n < parts.size()) {
    throw ConfigError("need at least 3 cycles to split into train/val/test, got " + std::to_string(n));
  }
  std::array<std::size_t, 3> sizes{};
  std::array<std::size_t, 3> rem{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    sizes[i] = n * parts[i] / total;
    rem[i] = n * parts[i] % total;
    assigned += sizes[i];
  }
  std::array<std::size_t, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k % 3]];
  for (std::size_t i = 0; i < 3; ++i) {
    if (sizes[i] == 0) {
      auto largest = static_cast<std::size_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
      --sizes[largest];
      ++sizes[i];
    }
  }
  return sizes;
}

CycleSplit split_cycles(std::vector<Cycle> cycles, SplitRatio ratio, std::uint64_t seed) {
  const auto sizes = split_sizes(cycles.size(), ratio);
  std::sort(cycles.begin(), cycles.end(), [](const Cycle& a, const Cycle& b) { return a.id < b.id; });
  Rng rng(seed);
  rng.shuffle(std::span<Cycle>(cycles));
  CycleSplit split;
  auto it = std::make_move_iterator(cycles.begin());
  split.train.assign(it, it + static_cast<std::ptrdiff_t>(sizes[0]));
  it += static_cast<std::ptrdiff_t>(sizes[0]);
  split.val.assign(it, it + static_cast<std::ptrdiff_t>(sizes[1]));
  it += static_cast<std::ptrdiff_t>(sizes[1]);
  split.test.assign(it, std::make_move_iterator(cycles.end()));
  return split;
}

CycleSplit split_cycles(std::vector<Cycle> cycles, SplitRatio ratio, std::uint64_t seed,
                        const std::vector<std::string>& test_ids) {
  if (test_ids.empty()) return split_cycles(std::move(cycles), ratio, seed);
  CycleSplit split;
  std::vector<Cycle> rest;
  for (auto& c : cycles) {
    if (std::find(test_ids.begin(), test_ids.end(), c.id) != test_ids.end()) {
      split.test.push_back(std::move(c));
    } else {
      rest.push_back(std::move(c));
    }
  }
  if (split.test.size() != test_ids.size()) throw ConfigError("unknown or duplicate test cycle id");
  if (rest.size() < 2) throw ConfigError("need at least 2 non-test cycles for train/val");
  std::sort(split.test.begin(), split.test.end(), [](const Cycle& a, const Cycle& b) { return a.id < b.id; });
  std::sort(rest.begin(), rest.end(), [](const Cycle& a, const Cycle& b) { return a.id < b.id; });
  Rng rng(seed);
  rng.shuffle(std::span<Cycle>(rest));
  const std::size_t total = ratio.train + ratio.val;
  std::size_t n_val = (rest.size() * ratio.val + total / 2) / total;
  n_val = std::clamp<std::size_t>(n_val, 1, rest.size() - 1);
  const std::size_t n_train = rest.size() - n_val;
  split.train.assign(std::make_move_iterator(rest.begin()),
                     std::make_move_iterator(rest.begin() + static_cast<std::ptrdiff_t>(n_train)));
  split.val.assign(std::make_move_iterator(rest.begin() + static_cast<std::ptrdiff_t>(n_train)),
                   std::make_move_iterator(rest.end()));
  return split;
}

}  // namespace ginet
