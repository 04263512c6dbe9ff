#include "tlmn/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <thread>

#include "tlmn/error.hpp"
#include "tlmn/random.hpp"

namespace tlmn {

namespace {

// Samples per gradient chunk. Chunk partial sums are reduced in chunk order,
// so results do not depend on how many threads run the chunks.
constexpr std::size_t kChunkSize = 8;

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

template <typename Fn>
void run_chunks(std::size_t chunks, std::size_t threads, Fn&& fn) {
  const std::size_t workers = std::min(resolve_threads(threads), chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) fn(c);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t c = w; c < chunks; c += workers) fn(c);
    });
  }
}

}  // namespace

double log_cosh(double residual) {
  const double a = std::abs(residual);
  return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

LossResult log_cosh_loss(std::span<const double> y, std::span<const double> y_hat) {
  if (y.size() != y_hat.size()) {
    throw ShapeError("log_cosh_loss: " + std::to_string(y.size()) + " targets vs " +
                     std::to_string(y_hat.size()) + " predictions");
  }
  if (y.empty()) throw ShapeError("log_cosh_loss: empty input");
  const double n = static_cast<double>(y.size());
  LossResult out;
  out.grad.resize(y.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - y_hat[i];
    sum += log_cosh(r);
    out.grad[i] = -std::tanh(r) / n;
  }
  out.loss = sum / n;
  return out;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (lr_patience < 1 || stop_patience < 1) throw ConfigError("patience values must be >= 1");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor < 1.0)) {
    throw ConfigError("lr_decay_factor must lie in (0, 1)");
  }
  if (!(min_learning_rate > 0.0)) throw ConfigError("min_learning_rate must be positive");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation_fraction must lie in (0, 1)");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0)) {
    throw ConfigError("Adam requires beta1, beta2 in [0, 1) and epsilon > 0");
  }
}

OptimizerState make_optimizer(const ModelState& state, const TrainConfig& cfg) {
  OptimizerState opt;
  opt.m.assign(state.params.size(), 0.0);
  opt.v.assign(state.params.size(), 0.0);
  opt.learning_rate = cfg.learning_rate;
  return opt;
}

void optimizer_step(ModelState& state, std::span<const double> grads, OptimizerState& opt,
                    const TrainConfig& cfg) {
  const std::size_t n = state.params.size();
  if (grads.size() != n || opt.m.size() != n || opt.v.size() != n) {
    throw ShapeError("optimizer_step: parameter, gradient and moment sizes differ");
  }
  for (const auto& t : state.layout.tensors()) {
    for (std::size_t i = t.offset; i < t.offset + t.size; ++i) {
      if (!std::isfinite(grads[i])) {
        throw TrainingError("non-finite gradient in tensor '" + t.name + "'");
      }
    }
  }
  ++opt.step;
  const double t = static_cast<double>(opt.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const double lr = opt.learning_rate;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads[i];
    opt.m[i] = cfg.beta1 * opt.m[i] + (1.0 - cfg.beta1) * g;
    opt.v[i] = cfg.beta2 * opt.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = opt.m[i] / bc1;
    const double v_hat = opt.v[i] / bc2;
    state.params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
  ++state.revision;
}

namespace {

// Index of the last epoch that improved on every earlier epoch by at least
// `min_improvement`.
std::size_t last_improvement(std::span<const double> history, double min_improvement) {
  std::size_t last = 0;
  double best = history[0];
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i] < best - min_improvement) {
      best = history[i];
      last = i;
    }
  }
  return last;
}

}  // namespace

double lr_schedule(OptimizerState& opt, std::span<const double> validation_history,
                   const TrainConfig& cfg) {
  if (validation_history.empty()) throw DomainError("lr_schedule needs a non-empty history");
  const std::size_t current = validation_history.size() - 1;
  const std::size_t anchor =
      std::max(last_improvement(validation_history, cfg.min_improvement), opt.last_decay_at);
  if (current - std::min(anchor, current) >= cfg.lr_patience) {
    opt.learning_rate = std::max(opt.learning_rate * cfg.lr_decay_factor, cfg.min_learning_rate);
    opt.last_decay_at = current;
  }
  return opt.learning_rate;
}

void split_validation(std::vector<FeatureWindow> windows, double fraction,
                      std::vector<FeatureWindow>& train, std::vector<FeatureWindow>& validation) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw DomainError("validation fraction must be in (0, 1)");
  std::stable_sort(windows.begin(), windows.end(),
                   [](const auto& a, const auto& b) { return a.target_time < b.target_time; });
  const auto n_val = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(windows.size())));
  const std::size_t n_train = windows.size() - std::min(n_val, windows.size());
  train.assign(std::make_move_iterator(windows.begin()),
               std::make_move_iterator(windows.begin() + static_cast<std::ptrdiff_t>(n_train)));
  validation.assign(std::make_move_iterator(windows.begin() + static_cast<std::ptrdiff_t>(n_train)),
                    std::make_move_iterator(windows.end()));
}

double evaluate_loss(const ModelState& state, std::span<const FeatureWindow> windows) {
  if (windows.empty()) throw DomainError("evaluate_loss on an empty set");
  std::vector<double> terms(windows.size());
  const std::size_t chunks = (windows.size() + kChunkSize - 1) / kChunkSize;
  run_chunks(chunks, 0, [&](std::size_t c) {
    ForwardTrace scratch;
    const std::size_t end = std::min(windows.size(), (c + 1) * kChunkSize);
    for (std::size_t i = c * kChunkSize; i < end; ++i) {
      // The gate pins the prediction to 0 when the clear-sky anchor is 0.
      const double pred = windows[i].target_ghi_clear == 0.0 ? 0.0 : forward(state, windows[i], &scratch).ghi_pred;
      terms[i] = log_cosh(windows[i].target_ghi - pred);
    }
  });
  double sum = 0.0;
  for (double t : terms) sum += t;
  return sum / static_cast<double>(windows.size());
}

double batch_gradient(const ModelState& state, std::span<const FeatureWindow> data,
                      std::span<const std::size_t> indices, std::span<double> grad,
                      std::size_t threads) {
  if (indices.empty()) throw DomainError("empty batch");
  if (grad.size() != state.layout.total()) throw ShapeError("gradient buffer size mismatch");
  const std::size_t n = indices.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const std::size_t chunks = (n + kChunkSize - 1) / kChunkSize;
  std::vector<std::vector<double>> partial(chunks);
  std::vector<double> chunk_loss(chunks, 0.0);
  std::vector<std::size_t> bad(chunks, std::numeric_limits<std::size_t>::max());

  run_chunks(chunks, threads, [&](std::size_t c) {
    partial[c].assign(grad.size(), 0.0);
    ForwardTrace trace;
    const std::size_t end = std::min(n, (c + 1) * kChunkSize);
    for (std::size_t k = c * kChunkSize; k < end; ++k) {
      const FeatureWindow& w = data[indices[k]];
      if (w.target_ghi_clear == 0.0) {
        // Gated to exactly 0 with a zero gradient; only the loss term remains.
        chunk_loss[c] += log_cosh(w.target_ghi) * inv_n;
        continue;
      }
      const Prediction p = forward(state, w, &trace);
      const double r = w.target_ghi - p.ghi_pred;
      if (!std::isfinite(r)) {
        bad[c] = std::min(bad[c], k);
        continue;
      }
      chunk_loss[c] += log_cosh(r) * inv_n;
      backward(state, trace, -std::tanh(r) * inv_n, partial[c]);
    }
  });

  for (std::size_t c = 0; c < chunks; ++c) {
    if (bad[c] != std::numeric_limits<std::size_t>::max()) {
      throw TrainingError("non-finite prediction for sample at " +
                          format_iso8601(data[indices[bad[c]]].target_time));
    }
  }
  double loss = 0.0;
  for (std::size_t c = 0; c < chunks; ++c) {
    loss += chunk_loss[c];
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += partial[c][i];
  }
  return loss;
}

TrainResult train(const ModelState& initial, std::span<const FeatureWindow> train_set,
                  std::span<const FeatureWindow> validation_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty() || validation_set.empty()) {
    throw TrainingError("training and validation sets must be non-empty");
  }
  ModelState state = initial;
  OptimizerState opt = make_optimizer(state, cfg);
  Rng rng(cfg.seed);

  TrainResult result;
  result.best = state;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> history;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> grad(state.layout.total());

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double epoch_loss = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++batch_no) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + begin, end - begin);
      std::fill(grad.begin(), grad.end(), 0.0);
      double loss;
      try {
        loss = batch_gradient(state, train_set, batch, grad, cfg.threads);
        if (!std::isfinite(loss)) throw TrainingError("non-finite batch loss");
        optimizer_step(state, grad, opt, cfg);
      } catch (const TrainingError& e) {
        throw TrainingError("epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_no) + ": " + e.what());
      }
      epoch_loss += loss * static_cast<double>(end - begin);
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss / static_cast<double>(order.size());
    log.val_loss = evaluate_loss(state, validation_set);
    if (!std::isfinite(log.val_loss)) {
      throw TrainingError("epoch " + std::to_string(epoch) + ": non-finite validation loss");
    }
    history.push_back(log.val_loss);
    if (log.val_loss < best_val) {
      best_val = log.val_loss;
      result.best = state;
      result.best_epoch = epoch;
    }
    log.learning_rate = opt.learning_rate;
    lr_schedule(opt, history, cfg);
    log.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);

    if (history.size() - 1 - last_improvement(history, cfg.min_improvement) >= cfg.stop_patience) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

GradientCheckResult gradient_check(const ModelState& state, const FeatureWindow& window, double h,
                                   std::size_t per_tensor, std::uint64_t seed, double floor) {
  ForwardTrace trace;
  forward(state, window, &trace);
  std::vector<double> analytic(state.layout.total(), 0.0);
  backward(state, trace, 1.0, analytic);

  ModelState probe = state;
  Rng rng(seed);
  GradientCheckResult result;
  for (const auto& t : state.layout.tensors()) {
    std::vector<std::size_t> entries;
    if (per_tensor == 0 || per_tensor >= t.size) {
      for (std::size_t i = 0; i < t.size; ++i) entries.push_back(t.offset + i);
    } else {
      for (std::size_t i = 0; i < per_tensor; ++i) entries.push_back(t.offset + rng.below(t.size));
    }
    for (std::size_t idx : entries) {
      const double saved = probe.params[idx];
      probe.params[idx] = saved + h;
      const double up = forward(probe, window).ghi_pred;
      probe.params[idx] = saved - h;
      const double down = forward(probe, window).ghi_pred;
      probe.params[idx] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[idx];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++result.checked;
      if (rel > result.max_relative_error || result.checked == 1) {
        result.max_relative_error = rel;
        result.worst_tensor = t.name;
      }
    }
  }
  return result;
}

std::string epoch_log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,train_loss,val_loss,lr,seconds\n";
  char line[160];
  for (const auto& e : log) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.3f\n", e.epoch, e.train_loss,
                  e.val_loss, e.learning_rate, e.seconds);
    out += line;
  }
  return out;
}

}  // namespace tlmn
