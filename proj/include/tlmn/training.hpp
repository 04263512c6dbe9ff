#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tlmn/features.hpp"
#include "tlmn/network.hpp"

namespace tlmn {

struct LossResult {
  double loss = 0.0;
  std::vector<double> grad;  ///< d(loss)/d(y_hat)
};

/// Mean log(cosh(y - y_hat)), evaluated as |r| + log1p(exp(-2|r|)) - log 2.
/// Throws ShapeError on length mismatch or empty input.
LossResult log_cosh_loss(std::span<const double> y, std::span<const double> y_hat);

/// Single-residual term; the building block of log_cosh_loss.
double log_cosh(double residual);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 200;
  std::size_t lr_patience = 5;
  std::size_t stop_patience = 15;
  double lr_decay_factor = 0.5;
  double min_learning_rate = 1e-6;
  double min_improvement = 1e-6;
  std::uint64_t seed = 42;
  double validation_fraction = 0.15;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Worker threads for per-sample gradients; 0 = hardware concurrency.
  /// Results do not depend on this value.
  std::size_t threads = 0;

  /// Throws ConfigError.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
  double learning_rate = 1e-3;
  /// History length at the last decay; patience restarts from there.
  std::size_t last_decay_at = 0;
};

OptimizerState make_optimizer(const ModelState& state, const TrainConfig& cfg);

/// One bias-corrected Adam update over every tensor. Throws TrainingError
/// naming the tensor if a gradient is not finite (parameters untouched).
void optimizer_step(ModelState& state, std::span<const double> grads, OptimizerState& opt,
                    const TrainConfig& cfg);

/// Reduce-on-plateau. Decays the rate when the last `lr_patience` epochs
/// brought no improvement of at least `min_improvement` over the best
/// earlier value. Returns the (possibly updated) learning rate.
double lr_schedule(OptimizerState& opt, std::span<const double> validation_history,
                   const TrainConfig& cfg);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double learning_rate = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  ModelState best;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  bool early_stopped = false;
};

/// Chronological split: the latest `fraction` of windows (by target time)
/// become the validation set.
void split_validation(std::vector<FeatureWindow> windows, double fraction,
                      std::vector<FeatureWindow>& train, std::vector<FeatureWindow>& validation);

/// Mean log-cosh over a window set.
double evaluate_loss(const ModelState& state, std::span<const FeatureWindow> windows);

/// Batch gradient of the mean log-cosh loss, reduced in fixed sample order.
/// Returns the batch loss.
double batch_gradient(const ModelState& state, std::span<const FeatureWindow> batch,
                      std::span<const std::size_t> indices, std::span<double> grad,
                      std::size_t threads = 0);

using EpochCallback = std::function<void(const EpochLog&)>;

/// Mini-batch Adam on the log-cosh objective with plateau decay and early
/// stopping; returns the best-validation parameters. `initial` supplies the
/// starting model (config, norm stats, anchor).
TrainResult train(const ModelState& initial, std::span<const FeatureWindow> train_set,
                  std::span<const FeatureWindow> validation_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  std::size_t checked = 0;
};

/// Central differences of the prediction against backward(). Relative error
/// is |a - n| / max(|a|, |n|, floor). `per_tensor` = 0 checks every
/// parameter, otherwise that many randomly chosen entries of each tensor.
GradientCheckResult gradient_check(const ModelState& state, const FeatureWindow& window,
                                   double h = 1e-5, std::size_t per_tensor = 0,
                                   std::uint64_t seed = 0, double floor = 1e-6);

/// CSV with header epoch,train_loss,val_loss,lr,seconds.
std::string epoch_log_csv(const std::vector<EpochLog>& log);

}  // namespace tlmn
