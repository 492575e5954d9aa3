#include "ginet/dataset_file.hpp"

#include "ginet/binary_io.hpp"
#include "ginet/error.hpp"

namespace ginet {

namespace {

constexpr char kMagic[9] = "GINETDAT";
constexpr std::uint32_t kVersion = 1;

std::vector<WindowSample> windows_for(const std::vector<Cycle>& cycles, const PrepareOptions& o) {
  std::vector<WindowSample> out;
  for (const auto& c : cycles) {
    auto w = make_windows(c, o.t_in, o.t_out, o.stride);
    out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return out;
}

std::vector<std::string> ids_of(const std::vector<Cycle>& cycles) {
  std::vector<std::string> ids;
  for (const auto& c : cycles) ids.push_back(c.id);
  return ids;
}

void write_split(BinaryWriter& w, const std::string& name, const std::vector<std::string>& ids,
                 const std::vector<WindowSample>& windows) {
  w.str(name);
  w.u64(ids.size());
  for (const auto& id : ids) w.str(id);
  w.u64(windows.size());
  for (const auto& s : windows) {
    w.str(s.cycle_id);
    w.u64(s.t_origin);
    w.f64(s.start_time);
    w.f64s(s.input);
    w.f64s(s.target);
  }
}

void read_split(BinaryReader& r, const std::string& name, std::size_t t_in, std::size_t t_out,
                std::vector<std::string>& ids, std::vector<WindowSample>& windows) {
  if (r.str() != name) throw ParseError(r.path() + ": expected split '" + name + "'");
  ids.resize(r.u64());
  for (auto& id : ids) id = r.str();
  windows.resize(r.u64());
  for (auto& s : windows) {
    s.cycle_id = r.str();
    s.t_origin = r.u64();
    s.start_time = r.f64();
    s.input = r.f64s(t_in * kNumFeatures);
    s.target = r.f64s(t_out);
  }
}

}  // namespace

PreparedDataset prepare_dataset(std::vector<Cycle> cycles, const PrepareOptions& options) {
  if (cycles.size() < 3) {
    throw InsufficientDataError("need at least 3 cycles for a train/val/test split, found " +
                                std::to_string(cycles.size()));
  }
  for (auto& c : cycles) c = derive_soc(std::move(c), options.capacity_ah);
  CycleSplit split = options.test_cycles.empty()
                         ? split_cycles(std::move(cycles), options.ratio, options.seed)
                         : split_cycles(std::move(cycles), options.ratio, options.seed, options.test_cycles);

  PreparedDataset ds;
  ds.norm = fit_normalize(split.train);
  split.train = apply_normalize(ds.norm, std::move(split.train));
  split.val = apply_normalize(ds.norm, std::move(split.val));
  split.test = apply_normalize(ds.norm, std::move(split.test));
  ds.train_ids = ids_of(split.train);
  ds.val_ids = ids_of(split.val);
  ds.test_ids = ids_of(split.test);
  ds.train = windows_for(split.train, options);
  ds.val = windows_for(split.val, options);
  ds.test = windows_for(split.test, options);
  if (ds.train.empty() || ds.val.empty() || ds.test.empty()) {
    throw InsufficientDataError("a split has no windows (train " + std::to_string(ds.train.size()) + ", val " +
                                std::to_string(ds.val.size()) + ", test " + std::to_string(ds.test.size()) +
                                "); cycles are shorter than T_in + T_out slots");
  }
  ds.provenance.t_in = options.t_in;
  ds.provenance.t_out = options.t_out;
  ds.provenance.stride = options.stride;
  ds.provenance.capacity_ah = options.capacity_ah;
  ds.provenance.seed = options.seed;
  return ds;
}

void save_prepared_dataset(const PreparedDataset& ds, const std::filesystem::path& file) {
  BinaryWriter w(file.string());
  w.bytes(kMagic, 8);
  w.u32(kVersion);
  const auto& p = ds.provenance;
  w.str(p.config_digest);
  w.str(p.config_text);
  w.str(p.source);
  w.u64(p.t_in);
  w.u64(p.t_out);
  w.u64(p.stride);
  w.f64(p.slot_seconds);
  w.f64(p.capacity_ah);
  w.u64(p.seed);
  w.f64s(ds.norm.min);
  w.f64s(ds.norm.max);
  write_split(w, "train", ds.train_ids, ds.train);
  write_split(w, "val", ds.val_ids, ds.val);
  write_split(w, "test", ds.test_ids, ds.test);
  w.close();
}

PreparedDataset load_prepared_dataset(const std::filesystem::path& file) {
  BinaryReader r(file.string());
  r.expect_magic(kMagic);
  if (const auto v = r.u32(); v != kVersion) {
    throw ParseError(file.string() + ": unsupported dataset version " + std::to_string(v));
  }
  PreparedDataset ds;
  auto& p = ds.provenance;
  p.config_digest = r.str();
  p.config_text = r.str();
  p.source = r.str();
  p.t_in = r.u64();
  p.t_out = r.u64();
  p.stride = r.u64();
  p.slot_seconds = r.f64();
  p.capacity_ah = r.f64();
  p.seed = r.u64();
  for (auto& v : ds.norm.min) v = r.f64();
  for (auto& v : ds.norm.max) v = r.f64();
  read_split(r, "train", p.t_in, p.t_out, ds.train_ids, ds.train);
  read_split(r, "val", p.t_in, p.t_out, ds.val_ids, ds.val);
  read_split(r, "test", p.t_in, p.t_out, ds.test_ids, ds.test);
  return ds;
}

}  // namespace ginet
