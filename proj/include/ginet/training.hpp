#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ginet/config.hpp"
#include "ginet/model.hpp"

namespace ginet {

/// Mean of squared elementwise differences over the full horizon.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

double mae(std::span<const double> pred, std::span<const double> truth);
double rmse(std::span<const double> pred, std::span<const double> truth);

/// Adam with bias correction over a fixed parameter list.
class Adam {
 public:
  Adam(ParamList params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void zero_grad();
  void step(double lr);

 private:
  ParamList params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

/// Tracks the best validation loss; stop once `patience` consecutive epochs
/// fail to improve on it.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Returns true when `val_loss` is a new best.
  bool update(double val_loss);
  bool should_stop() const { return since_best_ >= patience_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t since_best_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

struct ParamRecord {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

std::vector<ParamRecord> snapshot(const ParamList& params);
/// Copies values into the model's parameters; names and shapes must match.
void restore(const ParamList& params, const std::vector<ParamRecord>& records);

struct Checkpoint {
  RunConfig config;
  NormStats norm;
  std::vector<ParamRecord> params;
  double best_val_loss = 0.0;
  std::size_t epoch = 0;
};

/// Versioned binary container; see docs/formats.md.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& file);
Checkpoint load_checkpoint(const std::filesystem::path& file);

/// Builds a model from the checkpoint's config and loads its parameters.
GiNetModel restore_model(const Checkpoint& checkpoint);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> history;
  bool stopped_early = false;
};

/// Mini-batch Adam on MSE over the horizon. The checkpoint holds the
/// parameters of the epoch with the lowest validation loss, and `model` is
/// left holding them too. Throws NumericError on a non-finite loss.
TrainResult train(GiNetModel& model, const std::vector<WindowSample>& train_windows,
                  const std::vector<WindowSample>& val_windows, const RunConfig& config, const NormStats& norm,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

struct EvalOptions {
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

/// Eval-mode horizon predictions, one vector of T_out values per window.
/// Batches are fixed-size chunks in window order, each with its own sampling
/// seed, so results do not depend on the thread count.
std::vector<std::vector<double>> predict_horizons(const GiNetModel& model, const std::vector<WindowSample>& windows,
                                                  const EvalOptions& options);

/// Eval-mode MSE over the full horizon.
double validation_loss(const GiNetModel& model, const std::vector<WindowSample>& windows,
                       const EvalOptions& options);

struct Prediction {
  std::string cycle_id;
  std::size_t t_origin = 0;
  double predicted = 0.0;  // horizon-averaged
  double truth = 0.0;      // horizon-averaged
  std::vector<double> horizon;
};

struct EvalReport {
  double mae = 0.0;
  double rmse = 0.0;
  std::size_t n_windows = 0;
  std::string config_digest;
  std::vector<Prediction> predictions;
};

/// MAE/RMSE of horizon-averaged predictions against horizon-averaged truth.
EvalReport evaluate(const GiNetModel& model, const std::vector<WindowSample>& windows, const EvalOptions& options);
EvalReport evaluate(const Checkpoint& checkpoint, const std::vector<WindowSample>& windows, std::size_t threads = 1);

}  // namespace ginet
