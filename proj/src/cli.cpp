#include "ginet/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "ginet/dataset_file.hpp"
#include "ginet/error.hpp"
#include "ginet/synthetic.hpp"

namespace ginet {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + file.string());
  return out;
}

// Flags every pipeline command accepts. Values go through RunConfig::set so
// that validation and error messages match the config file.
struct SharedFlags {
  std::string config_file;
  std::vector<std::pair<std::string, std::string>> overrides;
  std::string seed, t_in, t_out, variant, attention, distill, e_layers, d_layers;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--config", config_file, "key=value config file");
    cmd.add_option("--seed", seed, "random seed");
    cmd.add_option("--t-in", t_in, "input window length in slots");
    cmd.add_option("--t-out", t_out, "forecast horizon in slots");
    cmd.add_option("--variant", variant, "ginet, informer or gru");
    cmd.add_option("--attention", attention, "probsparse or full");
    cmd.add_option("--distill", distill, "on or off");
    cmd.add_option("--e-layers", e_layers, "encoder layers");
    cmd.add_option("--d-layers", d_layers, "decoder layers");
  }

  void apply(RunConfig& config) const {
    if (!config_file.empty()) apply_config_file(config, config_file);
    const std::pair<const char*, const std::string*> flags[] = {
        {"seed", &seed},           {"t_in", &t_in},         {"t_out", &t_out},
        {"variant", &variant},     {"attention", &attention}, {"distill", &distill},
        {"e_layers", &e_layers},   {"d_layers", &d_layers},
    };
    for (const auto& [key, value] : flags) {
      if (!value->empty()) config.set(key, *value);
    }
    config.finalize();
  }
};

std::string digest_line(const std::string& digest) { return "# config_digest=" + digest + "\n"; }

// ---------------------------------------------------------------------------

int cmd_prepare(const fs::path& raw, const fs::path& out_file, const SharedFlags& flags, std::ostream& out) {
  RunConfig config;
  flags.apply(config);
  auto cycles = parse_dataset(raw, config.data.slot_seconds);

  PrepareOptions opts;
  opts.t_in = config.model.t_in;
  opts.t_out = config.model.t_out;
  opts.stride = config.data.stride;
  opts.capacity_ah = config.data.capacity_ah;
  opts.ratio = config.data.ratio;
  opts.seed = config.seed;
  opts.test_cycles = config.data.test_cycles;
  PreparedDataset ds = prepare_dataset(std::move(cycles), opts);
  ds.provenance.source = raw.filename().string();
  ds.provenance.slot_seconds = config.data.slot_seconds;
  ds.provenance.config_text = config.to_text();
  ds.provenance.config_digest = config.digest();
  save_prepared_dataset(ds, out_file);

  out << "train: " << ds.train_ids.size() << " cycles, " << ds.train.size() << " windows\n"
      << "val: " << ds.val_ids.size() << " cycles, " << ds.val.size() << " windows\n"
      << "test: " << ds.test_ids.size() << " cycles, " << ds.test.size() << " windows\n"
      << "config_digest: " << config.digest() << '\n';
  return kExitOk;
}

int cmd_train(const fs::path& dataset_file, const fs::path& ckpt_file, const std::string& log_path,
              const SharedFlags& flags, std::ostream& out) {
  const PreparedDataset ds = load_prepared_dataset(dataset_file);
  RunConfig config;
  apply_config_text(config, ds.provenance.config_text, dataset_file.string());
  flags.apply(config);
  if (config.model.t_in != ds.provenance.t_in || config.model.t_out != ds.provenance.t_out) {
    throw ConfigError("T_in/T_out (" + std::to_string(config.model.t_in) + "/" + std::to_string(config.model.t_out) +
                      ") differ from the prepared dataset (" + std::to_string(ds.provenance.t_in) + "/" +
                      std::to_string(ds.provenance.t_out) + ")");
  }

  const fs::path log_file = log_path.empty() ? fs::path(ckpt_file.string() + ".log.csv") : fs::path(log_path);
  auto log = open_out(log_file);
  log << digest_line(config.digest()) << "epoch,train_loss,val_loss,lr\n";

  GiNetModel model(config.model);
  const TrainResult result = train(model, ds.train, ds.val, config, ds.norm, [&](const EpochLog& e) {
    log << e.epoch << ',' << num(e.train_loss) << ',' << num(e.val_loss) << ',' << num(e.lr) << '\n';
    log.flush();
    out << "epoch " << e.epoch << "  train " << e.train_loss << "  val " << e.val_loss << "  lr " << e.lr << '\n';
  });
  save_checkpoint(result.checkpoint, ckpt_file);

  out << "best_val_loss: " << num(result.checkpoint.best_val_loss) << " (epoch " << result.checkpoint.epoch << ")\n"
      << (result.stopped_early ? "stopped early\n" : "")
      << "config_digest: " << config.digest() << '\n';
  return kExitOk;
}

int cmd_evaluate(const fs::path& ckpt_file, const fs::path& dataset_file, const fs::path& out_dir,
                 std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_file);
  const PreparedDataset ds = load_prepared_dataset(dataset_file);
  const auto& m = ckpt.config.model;
  if (m.t_in != ds.provenance.t_in || m.t_out != ds.provenance.t_out) {
    throw ConfigError("checkpoint T_in/T_out (" + std::to_string(m.t_in) + "/" + std::to_string(m.t_out) +
                      ") do not match the dataset (" + std::to_string(ds.provenance.t_in) + "/" +
                      std::to_string(ds.provenance.t_out) + ")");
  }
  const EvalReport report = evaluate(ckpt, ds.test, thread_budget());
  fs::create_directories(out_dir);

  auto rep = open_out(out_dir / "report.txt");
  rep << "mae=" << num(report.mae) << '\n'
      << "rmse=" << num(report.rmse) << '\n'
      << "n_windows=" << report.n_windows << '\n'
      << "config_digest=" << report.config_digest << '\n'
      << "variant=" << to_string(m.variant) << '\n'
      << "checkpoint_epoch=" << ckpt.epoch << '\n';

  auto csv = open_out(out_dir / "predictions.csv");
  csv << digest_line(report.config_digest) << "t_origin,y_soc_pred,y_soc_true\n";
  for (const auto& p : report.predictions) {
    csv << p.t_origin << ',' << num(p.predicted) << ',' << num(p.truth) << '\n';
  }

  auto svg = open_out(out_dir / "predictions.svg");
  svg << render_prediction_svg(report);

  out << "mae: " << report.mae << "\nrmse: " << report.rmse << "\nn_windows: " << report.n_windows
      << "\nconfig_digest: " << report.config_digest << '\n';
  return kExitOk;
}

int cmd_predict(const fs::path& ckpt_file, const fs::path& input_csv, const fs::path& out_csv, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_file);
  const auto& m = ckpt.config.model;
  const Cycle cycle = parse_cycle_file(input_csv, ckpt.config.data.slot_seconds);
  if (cycle.records.size() < m.t_in) {
    throw InsufficientDataError(input_csv.string() + " has " + std::to_string(cycle.records.size()) +
                                " slots; at least T_in = " + std::to_string(m.t_in) + " are needed");
  }
  const std::size_t first = cycle.records.size() - m.t_in;
  WindowSample w;
  w.cycle_id = cycle.id;
  w.t_origin = cycle.records.size();
  w.start_time = cycle.records[first].timestamp;
  for (std::size_t i = first; i < cycle.records.size(); ++i) {
    const auto f = cycle.records[i].features();
    for (std::size_t c = 0; c < kNumFeatures; ++c) w.input.push_back(ckpt.norm.scale(c, f[c]));
  }

  const GiNetModel model = restore_model(ckpt);
  const auto horizon = predict_horizons(model, {w}, EvalOptions{1, ckpt.config.seed, 1}).front();
  const double y = average_horizon(horizon);

  auto csv = open_out(out_csv);
  csv << digest_line(ckpt.config.digest()) << "t_origin,y_soc_pred";
  for (std::size_t h = 1; h <= horizon.size(); ++h) csv << ",yhat_" << h;
  csv << '\n' << w.t_origin << ',' << num(y);
  for (double v : horizon) csv << ',' << num(v);
  csv << '\n';

  out << "y_soc_pred: " << y << "\nconfig_digest: " << ckpt.config.digest() << '\n';
  return kExitOk;
}

int cmd_bench(const std::vector<std::size_t>& lengths, std::size_t d_model, std::size_t heads,
              std::uint64_t seed, const std::string& out_path, std::ostream& out) {
  if (lengths.size() < 2) throw ConfigError("bench-attention needs at least two lengths to form ratios");
  std::ostringstream params;
  params << "lengths=";
  for (std::size_t i = 0; i < lengths.size(); ++i) params << (i ? "," : "") << lengths[i];
  params << " d_model=" << d_model << " heads=" << heads << " seed=" << seed;
  const std::string digest = fnv1a_hex(params.str());

  const auto rows = bench_attention(lengths, d_model, heads, seed);
  std::ostringstream csv;
  csv << "# " << params.str() << '\n' << digest_line(digest) << "L,full_ops,probsparse_ops,full_ms,probsparse_ms\n";
  for (const auto& r : rows) {
    csv << r.length << ',' << r.full_ops << ',' << r.probsparse_ops << ',' << num(r.full_ms) << ','
        << num(r.probsparse_ms) << '\n';
  }
  if (out_path.empty()) {
    out << csv.str();
  } else {
    open_out(out_path) << csv.str();
    for (std::size_t i = 1; i < rows.size(); ++i) {
      out << rows[i - 1].length << " -> " << rows[i].length << ": full x"
          << static_cast<double>(rows[i].full_ops) / static_cast<double>(rows[i - 1].full_ops) << ", probsparse x"
          << static_cast<double>(rows[i].probsparse_ops) / static_cast<double>(rows[i - 1].probsparse_ops) << '\n';
    }
  }
  return kExitOk;
}

int cmd_synth(const fs::path& out_dir, const SyntheticOptions& opts, const SharedFlags& flags, std::ostream& out) {
  RunConfig config;
  flags.apply(config);
  fs::create_directories(out_dir);
  const auto cycles = generate_synthetic_cycles(opts, config.seed);
  for (const auto& c : cycles) write_cycle_csv(c, out_dir / (c.id + ".csv"));
  out << "wrote " << cycles.size() << " cycles to " << out_dir.string() << '\n';
  return kExitOk;
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<BenchRow> bench_attention(const std::vector<std::size_t>& lengths, std::size_t d_model,
                                      std::size_t heads, std::uint64_t seed, std::size_t factor) {
  if (heads == 0 || d_model % heads != 0) throw ConfigError("d_model must be divisible by heads");
  using clock = std::chrono::steady_clock;
  NoGradGuard guard;
  std::vector<BenchRow> rows;
  const std::size_t dh = d_model / heads;
  for (std::size_t L : lengths) {
    if (L < 2) throw ConfigError("bench lengths must be >= 2");
    Rng rng(derive_seed(seed, L));
    auto rand = [&] {
      std::vector<double> v(heads * L * dh);
      for (auto& x : v) x = rng.normal();
      return Tensor::from({1, heads, L, dh}, std::move(v));
    };
    const Tensor q = rand(), k = rand(), v = rand();
    BenchRow row;
    row.length = L;

    OpCounter::reset();
    auto t0 = clock::now();
    full_attention(q, k, v, false);
    row.full_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    row.full_ops = OpCounter::value();

    OpCounter::reset();
    Rng sample_rng(derive_seed(seed, L + 1));
    t0 = clock::now();
    probsparse_attention(q, k, v, ProbSparseOptions{factor, false}, false, sample_rng);
    row.probsparse_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    row.probsparse_ops = OpCounter::value();
    rows.push_back(row);
  }
  return rows;
}

std::string render_prediction_svg(const EvalReport& report) {
  const double w = 900, h = 420, left = 60, right = 20, top = 40, bottom = 50;
  const std::size_t n = report.predictions.size();
  double lo = 0.0, hi = 1.0;
  for (const auto& p : report.predictions) {
    lo = std::min({lo, p.predicted, p.truth});
    hi = std::max({hi, p.predicted, p.truth});
  }
  auto x_of = [&](std::size_t i) {
    return left + (n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.5) * (w - left - right);
  };
  auto y_of = [&](double v) { return top + (hi - v) / (hi - lo) * (h - top - bottom); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
    << ' ' << h << "\">\n"
    << "<!-- config_digest=" << report.config_digest << " -->\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << left << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">SoC forecast, mae="
    << report.mae << " rmse=" << report.rmse << " (config " << report.config_digest << ")</text>\n"
    << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - right << "\" y2=\"" << h - bottom
    << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << h - bottom
    << "\" stroke=\"black\"/>\n";
  for (double tick : {lo, (lo + hi) / 2, hi}) {
    s << "<text x=\"" << left - 8 << "\" y=\"" << y_of(tick) + 4
      << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << tick << "</text>\n";
  }
  s << "<text x=\"" << (left + w - right) / 2 << "\" y=\"" << h - 12
    << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">window (by cycle, t_origin)</text>\n";

  auto polyline = [&](bool predicted, const char* colour) {
    s << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.2\" points=\"";
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = report.predictions[i];
      s << x_of(i) << ',' << y_of(predicted ? p.predicted : p.truth) << ' ';
    }
    s << "\"/>\n";
  };
  polyline(false, "#1f77b4");
  polyline(true, "#d62728");
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = report.predictions[i];
    s << "<circle cx=\"" << x_of(i) << "\" cy=\"" << y_of(p.predicted) << "\" r=\"1.5\" fill=\"#d62728\"><title>"
      << p.cycle_id << " t_origin=" << p.t_origin << " pred=" << p.predicted << " true=" << p.truth
      << "</title></circle>\n";
  }
  s << "<text x=\"" << w - right - 150 << "\" y=\"" << top + 12
    << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#1f77b4\">true</text>\n"
    << "<text x=\"" << w - right - 100 << "\" y=\"" << top + 12
    << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#d62728\">predicted</text>\n"
    << "</svg>\n";
  return s.str();
}

std::size_t thread_budget() {
  if (const char* env = std::getenv("GINET_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const InsufficientDataError*>(&e)) return kExitInsufficientData;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
      dynamic_cast<const DimensionError*>(&e) || dynamic_cast<const DataError*>(&e)) {
    return kExitConfig;
  }
  return 1;
}

int run_cli(int argc, const char* const argv[], std::ostream& out, std::ostream& err) {
  CLI::App app{"GiNet: GRU-enhanced Informer for battery state-of-charge forecasting", "ginet"};
  app.require_subcommand(1);

  SharedFlags prep_flags, train_flags, synth_flags;
  std::string raw_dir, dataset, out_path, ckpt, out_dir, input_csv, log_path, bench_out;

  auto* prep = app.add_subcommand("prepare", "Ingest raw cycle CSVs into a prepared dataset");
  prep->add_option("raw_dir", raw_dir, "directory of cycle CSVs (or one CSV)")->required();
  prep->add_option("out", out_path, "prepared dataset file")->required();
  prep_flags.add_to(*prep);

  auto* tr = app.add_subcommand("train", "Train a model on a prepared dataset");
  tr->add_option("dataset", dataset, "prepared dataset file")->required();
  tr->add_option("checkpoint", ckpt, "output checkpoint file")->required();
  tr->add_option("--log", log_path, "training log CSV (default: <checkpoint>.log.csv)");
  train_flags.add_to(*tr);

  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on the test split");
  ev->add_option("checkpoint", ckpt)->required();
  ev->add_option("dataset", dataset)->required();
  ev->add_option("out_dir", out_dir, "directory for report.txt, predictions.csv, predictions.svg")->required();

  auto* pr = app.add_subcommand("predict", "Forecast from the last T_in slots of a raw CSV");
  pr->add_option("checkpoint", ckpt)->required();
  pr->add_option("input_csv", input_csv)->required();
  pr->add_option("out_csv", out_path)->required();

  std::vector<std::size_t> lengths{256, 512, 1024, 2048};
  std::size_t bench_d_model = 64, bench_heads = 4;
  std::uint64_t bench_seed = 0;
  auto* bench = app.add_subcommand("bench-attention", "Count attention work for full vs ProbSparse");
  bench->add_option("--lengths", lengths, "sequence lengths")->delimiter(',');
  bench->add_option("--d-model", bench_d_model, "model width");
  bench->add_option("--heads", bench_heads, "attention heads");
  bench->add_option("--seed", bench_seed, "random seed");
  bench->add_option("--out", bench_out, "output CSV (default: stdout)");

  SyntheticOptions synth_opts;
  auto* synth = app.add_subcommand("synth", "Write synthetic battery cycles as raw CSVs");
  synth->add_option("out_dir", out_dir)->required();
  synth->add_option("--cycles", synth_opts.n_cycles, "number of cycles");
  synth->add_option("--duration", synth_opts.duration_s, "cycle length in seconds");
  synth->add_option("--rate", synth_opts.sample_rate_hz, "samples per second");
  synth_flags.add_to(*synth);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*prep) return cmd_prepare(raw_dir, out_path, prep_flags, out);
    if (*tr) return cmd_train(dataset, ckpt, log_path, train_flags, out);
    if (*ev) return cmd_evaluate(ckpt, dataset, out_dir, out);
    if (*pr) return cmd_predict(ckpt, input_csv, out_path, out);
    if (*bench) return cmd_bench(lengths, bench_d_model, bench_heads, bench_seed, bench_out, out);
    if (*synth) return cmd_synth(out_dir, synth_opts, synth_flags, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kExitConfig;
}

}  // namespace ginet
