#include "ginet/config.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ginet/error.hpp"

namespace ginet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
  return out;
}

bool to_switch(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected on/off, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string onoff(bool b) { return b ? "on" : "off"; }

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (max_epochs == 0) throw ConfigError("max_epochs must be >= 1");
  if (patience == 0) throw ConfigError("patience must be >= 1");
  if (!(lr_decay > 0.0) || lr_decay > 1.0) throw ConfigError("lr_decay must be in (0, 1]");
}

double TrainConfig::lr_at(std::size_t epoch) const {
  if (!scheduler || epoch <= 1) return lr;
  return lr * std::pow(lr_decay, static_cast<double>(epoch - 1));
}

RunConfig::RunConfig() { finalize(); }

std::vector<std::string> RunConfig::keys() {
  return {"seed",        "t_in",          "t_out",          "label_len",      "slot_seconds", "stride",
          "capacity_ah", "split",         "test_cycles",    "variant",        "attention",    "distill",
          "e_layers",    "d_layers",      "d_model",        "n_heads",        "d_ff",         "dropout",
          "sampling_factor", "exact_sparsity", "cross_attention", "gru_hidden", "gru_layers", "gru_dropout",
          "batch_size",  "lr",            "lr_decay",       "scheduler",      "max_epochs",   "patience"};
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  auto& m = model;
  auto& inf = model.informer;
  if (key == "seed") {
    seed = to_size(key, v);
  } else if (key == "t_in") {
    m.t_in = to_size(key, v);
  } else if (key == "t_out") {
    m.t_out = to_size(key, v);
  } else if (key == "label_len") {
    if (v == "auto") {
      label_len_pinned_ = false;
    } else {
      m.label_len = to_size(key, v);
      label_len_pinned_ = true;
    }
  } else if (key == "slot_seconds") {
    data.slot_seconds = to_double(key, v);
  } else if (key == "stride") {
    data.stride = to_size(key, v);
  } else if (key == "capacity_ah") {
    data.capacity_ah = to_double(key, v);
  } else if (key == "split") {
    std::array<std::size_t, 3> parts{};
    std::size_t start = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      const auto colon = v.find(':', start);
      if ((i < 2) == (colon == std::string::npos)) throw ConfigError("config key 'split': expected a:b:c");
      parts[i] = to_size(key, v.substr(start, colon == std::string::npos ? std::string::npos : colon - start));
      start = colon + 1;
    }
    data.ratio = SplitRatio{parts[0], parts[1], parts[2]};
  } else if (key == "test_cycles") {
    data.test_cycles.clear();
    std::stringstream ss(v);
    std::string id;
    while (std::getline(ss, id, ',')) {
      if (!trim(id).empty()) data.test_cycles.push_back(trim(id));
    }
  } else if (key == "variant") {
    m.variant = parse_variant(v);
  } else if (key == "attention") {
    if (v != "probsparse" && v != "full") throw ConfigError("config key 'attention': expected probsparse or full");
    inf.use_probsparse = v == "probsparse";
  } else if (key == "distill") {
    inf.use_distill = to_switch(key, v);
  } else if (key == "e_layers") {
    inf.e_layers = to_size(key, v);
  } else if (key == "d_layers") {
    inf.d_layers = to_size(key, v);
  } else if (key == "d_model") {
    inf.d_model = to_size(key, v);
  } else if (key == "n_heads") {
    inf.n_heads = to_size(key, v);
  } else if (key == "d_ff") {
    inf.d_ff = to_size(key, v);
  } else if (key == "dropout") {
    inf.dropout = to_double(key, v);
  } else if (key == "sampling_factor") {
    inf.sampling_factor = to_size(key, v);
  } else if (key == "exact_sparsity") {
    inf.exact_sparsity = to_switch(key, v);
  } else if (key == "cross_attention") {
    if (v != "probsparse" && v != "full") throw ConfigError("config key 'cross_attention': expected probsparse or full");
    inf.probsparse_cross = v == "probsparse";
  } else if (key == "gru_hidden") {
    m.gru.hidden_dim = to_size(key, v);
  } else if (key == "gru_layers") {
    m.gru.num_layers = to_size(key, v);
  } else if (key == "gru_dropout") {
    m.gru.dropout = to_double(key, v);
  } else if (key == "batch_size") {
    train.batch_size = to_size(key, v);
  } else if (key == "lr") {
    train.lr = to_double(key, v);
  } else if (key == "lr_decay") {
    train.lr_decay = to_double(key, v);
  } else if (key == "scheduler") {
    train.scheduler = to_switch(key, v);
  } else if (key == "max_epochs") {
    train.max_epochs = to_size(key, v);
  } else if (key == "patience") {
    train.patience = to_size(key, v);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

void RunConfig::finalize() {
  model.seed = seed;
  train.seed = seed;
  model.slot_seconds = data.slot_seconds;
  if (!label_len_pinned_) model.label_len = model.t_in / 2;
  if (data.stride == 0) throw ConfigError("stride must be >= 1");
  if (!(data.capacity_ah > 0.0)) throw ConfigError("capacity_ah must be positive");
  model.validate();
  train.validate();
}

std::string RunConfig::to_text() const {
  const auto& m = model;
  const auto& inf = model.informer;
  std::string tests;
  for (std::size_t i = 0; i < data.test_cycles.size(); ++i) tests += (i ? "," : "") + data.test_cycles[i];
  std::ostringstream os;
  os << "seed=" << seed << '\n'
     << "t_in=" << m.t_in << '\n'
     << "t_out=" << m.t_out << '\n'
     << "label_len=" << m.label_len << '\n'
     << "slot_seconds=" << fmt(data.slot_seconds) << '\n'
     << "stride=" << data.stride << '\n'
     << "capacity_ah=" << fmt(data.capacity_ah) << '\n'
     << "split=" << data.ratio.train << ':' << data.ratio.val << ':' << data.ratio.test << '\n'
     << "test_cycles=" << tests << '\n'
     << "variant=" << to_string(m.variant) << '\n'
     << "attention=" << (inf.use_probsparse ? "probsparse" : "full") << '\n'
     << "distill=" << onoff(inf.use_distill) << '\n'
     << "e_layers=" << inf.e_layers << '\n'
     << "d_layers=" << inf.d_layers << '\n'
     << "d_model=" << inf.d_model << '\n'
     << "n_heads=" << inf.n_heads << '\n'
     << "d_ff=" << inf.d_ff << '\n'
     << "dropout=" << fmt(inf.dropout) << '\n'
     << "sampling_factor=" << inf.sampling_factor << '\n'
     << "exact_sparsity=" << onoff(inf.exact_sparsity) << '\n'
     << "cross_attention=" << (inf.probsparse_cross ? "probsparse" : "full") << '\n'
     << "gru_hidden=" << m.gru.hidden_dim << '\n'
     << "gru_layers=" << m.gru.num_layers << '\n'
     << "gru_dropout=" << fmt(m.gru.dropout) << '\n'
     << "batch_size=" << train.batch_size << '\n'
     << "lr=" << fmt(train.lr) << '\n'
     << "lr_decay=" << fmt(train.lr_decay) << '\n'
     << "scheduler=" << onoff(train.scheduler) << '\n'
     << "max_epochs=" << train.max_epochs << '\n'
     << "patience=" << train.patience << '\n';
  return os.str();
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string RunConfig::digest() const { return fnv1a_hex(to_text()); }

void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key=value");
    }
    config.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(config, ss.str(), file.string());
}

}  // namespace ginet
