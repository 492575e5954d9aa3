#include "ginet/training.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "ginet/binary_io.hpp"
#include "ginet/error.hpp"

namespace ginet {

namespace {

constexpr char kCheckpointMagic[9] = "GINETCKP";
constexpr std::uint32_t kCheckpointVersion = 1;

constexpr std::uint64_t kShuffleStream = 10;
constexpr std::uint64_t kDropoutStream = 11;
constexpr std::uint64_t kEvalStream = 1000;

std::vector<const WindowSample*> pointers(const std::vector<WindowSample>& windows) {
  std::vector<const WindowSample*> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(&w);
  return out;
}

std::vector<double> start_times(std::span<const WindowSample* const> batch) {
  std::vector<double> out;
  out.reserve(batch.size());
  for (const auto* w : batch) out.push_back(w->start_time);
  return out;
}

}  // namespace

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("mse_loss: prediction " + shape_str(pred.shape()) + " vs target " +
                         shape_str(target.shape()));
  }
  const Tensor diff = sub(pred, target);
  return mean(mul(diff, diff));
}

double mae(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw DimensionError("mae: length mismatch");
  if (pred.empty()) throw DimensionError("mae: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += std::abs(pred[i] - truth[i]);
  return total / static_cast<double>(pred.size());
}

double rmse(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw DimensionError("rmse: length mismatch");
  if (pred.empty()) throw DimensionError("rmse: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return std::sqrt(total / static_cast<double>(pred.size()));
}

// ---------------------------------------------------------------------------

Adam::Adam(ParamList params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& t = params_[i].tensor;
    if (!t.has_grad()) continue;
    auto g = t.grad();
    auto w = t.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

bool EarlyStopping::update(double val_loss) {
  if (val_loss < best_) {
    best_ = val_loss;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

// ---------------------------------------------------------------------------

std::vector<ParamRecord> snapshot(const ParamList& params) {
  std::vector<ParamRecord> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    out.push_back({p.name, p.tensor.shape(), {p.tensor.data().begin(), p.tensor.data().end()}});
  }
  return out;
}

void restore(const ParamList& params, const std::vector<ParamRecord>& records) {
  if (params.size() != records.size()) {
    throw ConfigError("parameter count mismatch: model has " + std::to_string(params.size()) + ", checkpoint has " +
                      std::to_string(records.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    const auto& r = records[i];
    if (p.name != r.name || p.tensor.shape() != r.shape || r.data.size() != p.tensor.numel()) {
      throw ConfigError("parameter mismatch at '" + p.name + "' " + shape_str(p.tensor.shape()) + " vs '" + r.name +
                        "' " + shape_str(r.shape));
    }
    Tensor t = p.tensor;
    std::copy(r.data.begin(), r.data.end(), t.mutable_data().begin());
  }
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& file) {
  BinaryWriter w(file.string());
  w.bytes(kCheckpointMagic, 8);
  w.u32(kCheckpointVersion);
  w.str(checkpoint.config.digest());
  w.str(checkpoint.config.to_text());
  w.f64s(checkpoint.norm.min);
  w.f64s(checkpoint.norm.max);
  w.f64(checkpoint.best_val_loss);
  w.u64(checkpoint.epoch);
  w.u64(checkpoint.params.size());
  for (const auto& p : checkpoint.params) {
    w.str(p.name);
    w.u64(p.shape.size());
    for (auto d : p.shape) w.u64(d);
    w.f64s(p.data);
  }
  w.close();
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  BinaryReader r(file.string());
  r.expect_magic(kCheckpointMagic);
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw ParseError(r.path() + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  const std::string digest = r.str();
  const std::string text = r.str();
  apply_config_text(c.config, text, r.path());
  c.config.finalize();
  if (c.config.digest() != digest || fnv1a_hex(text) != digest) {
    throw ParseError(r.path() + ": config digest mismatch");
  }
  for (auto& v : c.norm.min) v = r.f64();
  for (auto& v : c.norm.max) v = r.f64();
  c.best_val_loss = r.f64();
  c.epoch = r.u64();
  const auto n = r.u64();
  if (n > 100000) throw ParseError(r.path() + ": corrupt parameter count");
  for (std::uint64_t i = 0; i < n; ++i) {
    ParamRecord p;
    p.name = r.str();
    const auto rank = r.u64();
    if (rank > 8) throw ParseError(r.path() + ": corrupt tensor rank");
    for (std::uint64_t d = 0; d < rank; ++d) p.shape.push_back(r.u64());
    p.data = r.f64s(shape_numel(p.shape));
    c.params.push_back(std::move(p));
  }
  return c;
}

GiNetModel restore_model(const Checkpoint& checkpoint) {
  GiNetModel model(checkpoint.config.model);
  restore(model.parameters(), checkpoint.params);
  return model;
}

// ---------------------------------------------------------------------------

std::vector<std::vector<double>> predict_horizons(const GiNetModel& model, const std::vector<WindowSample>& windows,
                                                  const EvalOptions& options) {
  const std::size_t t_in = model.config().t_in;
  const std::size_t t_out = model.config().t_out;
  const std::size_t bs = std::max<std::size_t>(options.batch_size, 1);
  const auto ptrs = pointers(windows);
  const std::size_t n_batches = (ptrs.size() + bs - 1) / bs;
  std::vector<std::vector<double>> out(ptrs.size());

  auto run_batch = [&](std::size_t b) {
    const std::size_t begin = b * bs;
    const std::size_t end = std::min(ptrs.size(), begin + bs);
    std::span<const WindowSample* const> batch(ptrs.data() + begin, end - begin);
    ForwardContext ctx{Mode::Eval, Rng(derive_seed(options.seed, kEvalStream + b))};
    const auto starts = start_times(batch);
    const Tensor pred = model.forward(batch_inputs(batch, t_in), starts, ctx);
    const auto d = pred.data();
    for (std::size_t i = 0; i < batch.size(); ++i) {
      out[begin + i].assign(d.begin() + static_cast<std::ptrdiff_t>(i * t_out),
                            d.begin() + static_cast<std::ptrdiff_t>((i + 1) * t_out));
    }
  };

  const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, std::max<std::size_t>(n_batches, 1));
  if (threads <= 1) {
    NoGradGuard guard;
    for (std::size_t b = 0; b < n_batches; ++b) run_batch(b);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        NoGradGuard guard;
        for (std::size_t b = t; b < n_batches; b += threads) run_batch(b);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

double validation_loss(const GiNetModel& model, const std::vector<WindowSample>& windows,
                       const EvalOptions& options) {
  if (windows.empty()) throw InsufficientDataError("validation split has no windows");
  const auto preds = predict_horizons(model, windows, options);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    for (std::size_t h = 0; h < preds[i].size(); ++h) {
      const double e = preds[i][h] - windows[i].target[h];
      total += e * e;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

TrainResult train(GiNetModel& model, const std::vector<WindowSample>& train_windows,
                  const std::vector<WindowSample>& val_windows, const RunConfig& config, const NormStats& norm,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  const TrainConfig& tc = config.train;
  tc.validate();
  if (train_windows.empty()) throw InsufficientDataError("training split has no windows");
  if (val_windows.empty()) throw InsufficientDataError("validation split has no windows");

  const std::size_t t_in = model.config().t_in;
  const std::size_t t_out = model.config().t_out;
  const ParamList params = model.parameters();
  Adam optimizer(params, tc.beta1, tc.beta2, tc.adam_eps);
  EarlyStopping stopper(tc.patience);
  Rng shuffle_rng(derive_seed(tc.seed, kShuffleStream));
  ForwardContext ctx{Mode::Train, Rng(derive_seed(tc.seed, kDropoutStream))};
  const EvalOptions eval_opts{tc.batch_size, tc.seed, 1};

  TrainResult result;
  result.checkpoint.config = config;
  result.checkpoint.norm = norm;
  result.checkpoint.params = snapshot(params);
  result.checkpoint.best_val_loss = std::numeric_limits<double>::infinity();

  auto order = pointers(train_windows);
  for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    const double lr = tc.lr_at(epoch);
    shuffle_rng.shuffle(std::span<const WindowSample*>(order));
    double loss_total = 0.0;
    std::size_t loss_count = 0;
    ctx.mode = Mode::Train;
    for (std::size_t begin = 0; begin < order.size(); begin += tc.batch_size) {
      const std::size_t end = std::min(order.size(), begin + tc.batch_size);
      std::span<const WindowSample* const> batch(order.data() + begin, end - begin);
      const auto starts = start_times(batch);
      optimizer.zero_grad();
      const Tensor pred = model.forward(batch_inputs(batch, t_in), starts, ctx);
      const Tensor loss = mse_loss(pred, batch_targets(batch, t_out));
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
      }
      backward(loss);
      optimizer.step(lr);
      loss_total += value * static_cast<double>(batch.size());
      loss_count += batch.size();
    }

    const double val = validation_loss(model, val_windows, eval_opts);
    if (!std::isfinite(val)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    const EpochLog log{epoch, loss_total / static_cast<double>(loss_count), val, lr};
    result.history.push_back(log);
    if (on_epoch) on_epoch(log);

    if (stopper.update(val)) {
      result.checkpoint.params = snapshot(params);
      result.checkpoint.best_val_loss = val;
      result.checkpoint.epoch = epoch;
    } else if (stopper.should_stop()) {
      result.stopped_early = epoch < tc.max_epochs;
      break;
    }
  }
  restore(params, result.checkpoint.params);
  return result;
}

EvalReport evaluate(const GiNetModel& model, const std::vector<WindowSample>& windows, const EvalOptions& options) {
  if (windows.empty()) throw InsufficientDataError("no windows to evaluate");
  const auto preds = predict_horizons(model, windows, options);
  EvalReport report;
  report.n_windows = windows.size();
  std::vector<double> p, t;
  p.reserve(windows.size());
  t.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    Prediction pr;
    pr.cycle_id = windows[i].cycle_id;
    pr.t_origin = windows[i].t_origin;
    pr.predicted = average_horizon(preds[i]);
    pr.truth = average_horizon(windows[i].target);
    pr.horizon = preds[i];
    p.push_back(pr.predicted);
    t.push_back(pr.truth);
    report.predictions.push_back(std::move(pr));
  }
  report.mae = mae(p, t);
  report.rmse = rmse(p, t);
  return report;
}

EvalReport evaluate(const Checkpoint& checkpoint, const std::vector<WindowSample>& windows, std::size_t threads) {
  const GiNetModel model = restore_model(checkpoint);
  EvalReport report =
      evaluate(model, windows, EvalOptions{checkpoint.config.train.batch_size, checkpoint.config.seed, threads});
  report.config_digest = checkpoint.config.digest();
  return report;
}

}  // namespace ginet
