#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "test_support.hpp"
#include "tlmn/error.hpp"
#include "tlmn/ingest.hpp"
#include "tlmn/pipeline.hpp"
#include "tlmn/training.hpp"

namespace tlmn {
namespace {

using testing::random_model;
using testing::random_window;
using testing::small_random_config;

TEST(LogCosh, ZeroResidual) {
  const std::vector<double> y{1.0, 250.0, -3.5};
  const auto r = log_cosh_loss(y, y);
  EXPECT_EQ(r.loss, 0.0);
  for (double g : r.grad) EXPECT_EQ(g, 0.0);
}

TEST(LogCosh, QuadraticRegime) {
  for (double r : {0.01, -0.01, 0.005, 1e-4}) {
    const double expected = r * r / 2.0;
    EXPECT_LT(std::abs(log_cosh(r) - expected) / expected, 1e-3) << r;
  }
  const std::vector<double> y{0.01}, yh{0.0};
  EXPECT_NEAR(log_cosh_loss(y, yh).loss, 5.0e-5, 5.0e-8);
}

TEST(LogCosh, LinearRegime) {
  EXPECT_NEAR(log_cosh(10.0), 10.0 - std::log(2.0), 1e-4);
  EXPECT_NEAR(log_cosh(-10.0), 10.0 - std::log(2.0), 1e-4);
  EXPECT_NEAR(log_cosh(10.0), 9.30685, 1e-4);
  // Direct evaluation is fine at this magnitude.
  EXPECT_NEAR(log_cosh(10.0), std::log(std::cosh(10.0)), 1e-12);
}

TEST(LogCosh, NoOverflow) {
  for (double r : {1e6, -1e6, 800.0, 1e300}) {
    const double v = log_cosh(r);
    EXPECT_TRUE(std::isfinite(v)) << r;
    EXPECT_NEAR(v, std::abs(r) - std::log(2.0), 1e-9 * std::abs(r));
  }
  const std::vector<double> y{1e6}, yh{0.0};
  const auto res = log_cosh_loss(y, yh);
  EXPECT_TRUE(std::isfinite(res.loss));
  EXPECT_EQ(res.grad[0], -1.0);
}

TEST(LogCosh, GradientIsMinusTanhOverN) {
  Rng rng(1);
  std::vector<double> y(37), yh(37);
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = rng.uniform(0.0, 1000.0);
    yh[i] = rng.uniform(0.0, 1000.0);
    if (i % 5 == 0) yh[i] = y[i] + rng.uniform(-2.0, 2.0);
  }
  const auto r = log_cosh_loss(y, yh);
  const double n = static_cast<double>(y.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    EXPECT_NEAR(r.grad[i], -std::tanh(y[i] - yh[i]) / n, 1e-10);
    EXPECT_LE(std::abs(r.grad[i]), 1.0 / n);
    sum += log_cosh(y[i] - yh[i]);
  }
  EXPECT_NEAR(r.loss, sum / n, 1e-12);
}

TEST(LogCosh, Symmetric) {
  Rng rng(2);
  std::vector<double> a(50), b(50);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = rng.uniform(-500.0, 500.0);
    b[i] = rng.uniform(-500.0, 500.0);
  }
  EXPECT_EQ(log_cosh_loss(a, b).loss, log_cosh_loss(b, a).loss);
}

TEST(LogCosh, ShapeErrors) {
  const std::vector<double> a{1.0, 2.0}, b{1.0};
  EXPECT_THROW(log_cosh_loss(a, b), ShapeError);
  EXPECT_THROW(log_cosh_loss(std::vector<double>{}, std::vector<double>{}), ShapeError);
}

ModelState scalar_model() {
  // Any model works as a parameter container for the optimizer.
  ModelConfig cfg;
  cfg.window_len = 6;
  cfg.feature_width = 1;
  cfg.channels = 1;
  cfg.conv_kernel = 2;
  cfg.dilations = {1};
  cfg.head_hidden = 1;
  cfg.celestial_dim = 1;
  return zero_model(cfg);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Rng rng(3);
  ModelState m = random_model(scalar_model().config, rng);
  const auto before = m.params;
  TrainConfig cfg;
  OptimizerState opt = make_optimizer(m, cfg);
  const std::vector<double> g(m.params.size(), 0.0);
  for (int i = 0; i < 5; ++i) optimizer_step(m, g, opt, cfg);
  EXPECT_EQ(m.params, before);
  EXPECT_EQ(opt.step, 5u);
}

TEST(Adam, QuadraticDescendsUntilZeroCrossing) {
  // Independent simulation of bias-corrected Adam on w^2 from w = 1 at lr 0.1:
  // |w| shrinks for 11 steps, w crosses zero on step 12 and momentum then
  // carries it to about -0.27 by step 20.
  ModelState m = scalar_model();
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  OptimizerState opt = make_optimizer(m, cfg);
  m.params[0] = 1.0;
  std::vector<double> g(m.params.size(), 0.0);
  double prev = 1.0;
  for (int i = 1; i <= 20; ++i) {
    g[0] = 2.0 * m.params[0];
    optimizer_step(m, g, opt, cfg);
    if (i <= 11) {
      EXPECT_LT(std::abs(m.params[0]), prev) << "step " << i;
      EXPECT_GT(m.params[0], 0.0);
    }
    prev = std::abs(m.params[0]);
  }
  EXPECT_NEAR(m.params[0], -0.2711540954901284, 1e-12);
}

TEST(Adam, MatchesScalarSimulation) {
  ModelState m = scalar_model();
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  OptimizerState opt = make_optimizer(m, cfg);
  m.params[0] = 0.7;
  double w = 0.7, mom = 0.0, vel = 0.0;
  std::vector<double> g(m.params.size(), 0.0);
  for (int t = 1; t <= 30; ++t) {
    const double grad = 2.0 * w - 0.3;
    g[0] = 2.0 * m.params[0] - 0.3;
    optimizer_step(m, g, opt, cfg);
    mom = 0.9 * mom + 0.1 * grad;
    vel = 0.999 * vel + 0.001 * grad * grad;
    const double mh = mom / (1.0 - std::pow(0.9, t));
    const double vh = vel / (1.0 - std::pow(0.999, t));
    w -= 0.05 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(m.params[0], w, 1e-12);
  }
}

TEST(Adam, NonFiniteGradientNamesTensor) {
  ModelState m = scalar_model();
  TrainConfig cfg;
  OptimizerState opt = make_optimizer(m, cfg);
  const auto before = m.params;
  std::vector<double> g(m.params.size(), 0.0);
  const auto& spec = m.layout.find("head.hidden.weight");
  g[spec.offset] = std::numeric_limits<double>::quiet_NaN();
  try {
    optimizer_step(m, g, opt, cfg);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("head.hidden.weight"), std::string::npos) << e.what();
  }
  EXPECT_EQ(m.params, before);
}

TEST(Adam, AccumulatorsMirrorParameters) {
  const ModelState m = initialize_model(ModelConfig{}, 1);
  const OptimizerState opt = make_optimizer(m, TrainConfig{});
  EXPECT_EQ(opt.m.size(), m.params.size());
  EXPECT_EQ(opt.v.size(), m.params.size());
}

TEST(LrSchedule, ImprovingHistoryKeepsRate) {
  TrainConfig cfg;
  OptimizerState opt = make_optimizer(scalar_model(), cfg);
  std::vector<double> h;
  for (int i = 0; i < 30; ++i) {
    h.push_back(100.0 - i);
    EXPECT_EQ(lr_schedule(opt, h, cfg), 1e-3);
  }
}

TEST(LrSchedule, FiveFlatEpochsHalveOnce) {
  TrainConfig cfg;
  OptimizerState opt = make_optimizer(scalar_model(), cfg);
  std::vector<double> h{10.0};
  lr_schedule(opt, h, cfg);
  for (int i = 0; i < 5; ++i) {
    h.push_back(10.0);
    lr_schedule(opt, h, cfg);
  }
  EXPECT_EQ(opt.learning_rate, 5e-4);
  for (int i = 0; i < 4; ++i) {
    h.push_back(10.0);
    EXPECT_EQ(lr_schedule(opt, h, cfg), 5e-4);
  }
  h.push_back(10.0);
  EXPECT_EQ(lr_schedule(opt, h, cfg), 2.5e-4);
}

TEST(LrSchedule, Floor) {
  TrainConfig cfg;
  OptimizerState opt = make_optimizer(scalar_model(), cfg);
  std::vector<double> h;
  for (int i = 0; i < 500; ++i) {
    h.push_back(1.0);
    EXPECT_GE(lr_schedule(opt, h, cfg), 1e-6);
  }
  EXPECT_EQ(opt.learning_rate, 1e-6);
}

TEST(LrSchedule, EmptyHistory) {
  TrainConfig cfg;
  OptimizerState opt = make_optimizer(scalar_model(), cfg);
  EXPECT_THROW(lr_schedule(opt, std::vector<double>{}, cfg), DomainError);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.lr_decay_factor = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(TrainConfig{}.validate());
}

std::vector<FeatureWindow> stamped_windows(const ModelConfig& cfg, Rng& rng, std::size_t n) {
  std::vector<FeatureWindow> ws;
  for (std::size_t i = 0; i < n; ++i) {
    FeatureWindow w = random_window(cfg, rng, rng.uniform(100.0, 900.0), i % 4 == 0);
    w.target_time = make_utc(2021, 1, 1) + kHour * static_cast<long>(n - i);
    ws.push_back(std::move(w));
  }
  return ws;
}

TEST(ValidationSplit, ChronologicalTail) {
  Rng rng(4);
  const ModelConfig cfg = small_random_config(rng);
  std::vector<FeatureWindow> train, val;
  split_validation(stamped_windows(cfg, rng, 40), 0.15, train, val);
  EXPECT_EQ(val.size(), 6u);
  EXPECT_EQ(train.size(), 34u);
  for (const auto& t : train) EXPECT_LT(t.target_time, val.front().target_time);
  for (std::size_t i = 1; i < val.size(); ++i) EXPECT_LT(val[i - 1].target_time, val[i].target_time);
  EXPECT_THROW(split_validation({}, 1.0, train, val), DomainError);
}

TEST(BatchGradient, ThreadCountInvariant) {
  Rng rng(5);
  const ModelConfig cfg = small_random_config(rng);
  const ModelState m = random_model(cfg, rng, 0.4);
  const auto ws = stamped_windows(cfg, rng, 45);
  std::vector<std::size_t> idx(ws.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<double> g1(m.layout.total(), 0.0), g4(m.layout.total(), 0.0);
  const double l1 = batch_gradient(m, ws, idx, g1, 1);
  const double l4 = batch_gradient(m, ws, idx, g4, 4);
  EXPECT_EQ(l1, l4);
  EXPECT_EQ(g1, g4);
}

TEST(BatchGradient, MatchesFiniteDifferenceOfLoss) {
  Rng rng(6);
  const ModelConfig cfg = small_random_config(rng);
  ModelState m = random_model(cfg, rng, 0.4);
  auto ws = stamped_windows(cfg, rng, 6);
  // Keep residuals near zero so the loss is in its curved regime.
  for (auto& w : ws) w.target_ghi = forward(m, w).ghi_pred + rng.uniform(-0.5, 0.5);
  std::vector<std::size_t> idx(ws.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<double> g(m.layout.total(), 0.0);
  const double loss = batch_gradient(m, ws, idx, g, 1);
  EXPECT_NEAR(loss, evaluate_loss(m, ws), 1e-12);
  const double h = 1e-6;
  for (std::size_t p = 0; p < m.params.size(); p += 3) {
    const double saved = m.params[p];
    m.params[p] = saved + h;
    const double up = evaluate_loss(m, ws);
    m.params[p] = saved - h;
    const double down = evaluate_loss(m, ws);
    m.params[p] = saved;
    const double num = (up - down) / (2 * h);
    EXPECT_NEAR(g[p], num, 1e-6 * std::max(1.0, std::abs(num))) << p;
  }
}

TEST(Train, NocturnalOnlyLeavesParameters) {
  Rng rng(7);
  const ModelConfig cfg = small_random_config(rng);
  const ModelState init = random_model(cfg, rng, 0.3);
  std::vector<FeatureWindow> tr, va;
  for (int i = 0; i < 20; ++i) tr.push_back(random_window(cfg, rng, 0.0, true));
  for (int i = 0; i < 5; ++i) va.push_back(random_window(cfg, rng, 0.0, true));
  TrainConfig tc;
  tc.max_epochs = 3;
  tc.batch_size = 8;
  const TrainResult r = train(init, tr, va, tc);
  EXPECT_EQ(r.best.params, init.params);
  EXPECT_EQ(r.log.size(), 3u);
}

TEST(Train, SeedFixedRetrainIsIdentical) {
  Rng rng(8);
  const ModelConfig cfg = small_random_config(rng);
  const ModelState init = random_model(cfg, rng, 0.3);
  const auto tr = stamped_windows(cfg, rng, 60);
  const auto va = stamped_windows(cfg, rng, 12);
  TrainConfig tc;
  tc.max_epochs = 4;
  tc.batch_size = 16;
  tc.learning_rate = 1e-2;
  const TrainResult a = train(init, tr, va, tc);
  tc.threads = 3;
  const TrainResult b = train(init, tr, va, tc);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].train_loss, b.log[i].train_loss);
    EXPECT_EQ(a.log[i].val_loss, b.log[i].val_loss);
    EXPECT_EQ(a.log[i].learning_rate, b.log[i].learning_rate);
  }
  EXPECT_EQ(a.best.params, b.best.params);
  EXPECT_EQ(a.best_epoch, b.best_epoch);
}

TEST(Train, EmptySetsRejected) {
  const ModelState m = initialize_model(ModelConfig{}, 1);
  std::vector<FeatureWindow> none;
  EXPECT_ANY_THROW(train(m, none, none, TrainConfig{}));
}

TEST(Train, FirstEpochOnSyntheticDataImproves) {
  RunConfig cfg;
  cfg.split = SplitSpec{{2020, 2020}, {2021, 2021}};
  SyntheticConfig sc;
  sc.first_year = 2020;
  sc.last_year = 2020;
  auto series = synth_generate(sc);
  // Two months keep this fast.
  series.records.resize(24 * 60);
  const PreparedData data = prepare_data(cfg, series.records);
  ModelState init = initialize_model(cfg.model, cfg.seed);
  init.norm = data.norm;
  std::vector<FeatureWindow> tr, va;
  split_validation(data.windows.train, 0.15, tr, va);
  const double start = evaluate_loss(init, tr);
  TrainConfig tc;
  tc.max_epochs = 1;
  const TrainResult r = train(init, tr, va, tc);
  ASSERT_EQ(r.log.size(), 1u);
  EXPECT_TRUE(std::isfinite(r.log[0].train_loss));
  EXPECT_LT(evaluate_loss(r.best, tr), start);
}

TEST(GradientCheck, FlagsCorruptedBackward) {
  Rng rng(9);
  const ModelConfig cfg = small_random_config(rng);
  const ModelState m = random_model(cfg, rng, 0.5);
  const auto ok = gradient_check(m, random_window(cfg, rng, 1.0));
  EXPECT_LT(ok.max_relative_error, 1e-5);
  // A step far too large for the curvature shows up as error.
  const auto coarse = gradient_check(m, random_window(cfg, rng, 1.0), 0.5);
  EXPECT_GT(coarse.max_relative_error, ok.max_relative_error);
}

TEST(EpochLog, CsvHeader) {
  std::vector<EpochLog> log{{1, 2.5, 3.5, 1e-3, 0.25}};
  const std::string csv = epoch_log_csv(log);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,train_loss,val_loss,lr,seconds");
}

}  // namespace
}  // namespace tlmn
