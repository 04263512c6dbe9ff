#include "tlmn/pipeline.hpp"

#include "tlmn/error.hpp"

namespace tlmn {

namespace {

PreparedData build(const RunConfig& cfg, std::span<const MeteoRecord> records) {
  cfg.validate();
  if (records.empty()) throw DataError("no records");
  PreparedData out;
  out.series = build_feature_series(records, cfg.location, cfg.clear_sky, cfg.features);
  return out;
}

}  // namespace

PreparedData prepare_data(const RunConfig& cfg, std::span<const MeteoRecord> records) {
  PreparedData out = build(cfg, records);
  const auto train_rows = features_in_range(out.series, cfg.split.train);
  if (train_rows.empty()) {
    throw DataError("no records inside the training years " + std::to_string(cfg.split.train.first) + "-" +
                    std::to_string(cfg.split.train.last));
  }
  out.norm = fit_normalization(train_rows, &out.warnings);
  out.windows = make_windows(out.series, out.norm, cfg.split, cfg.model.window_len);
  return out;
}

PreparedData prepare_data(const RunConfig& cfg, std::span<const MeteoRecord> records, const NormStats& norm) {
  PreparedData out = build(cfg, records);
  out.norm = norm;
  out.windows = make_windows(out.series, out.norm, cfg.split, cfg.model.window_len);
  return out;
}

TrainingRun train_model(const RunConfig& cfg, const PreparedData& data, const EpochCallback& on_epoch) {
  if (data.windows.train.empty()) throw DataError("no training windows");
  ModelState initial = initialize_model(cfg.model, cfg.seed);
  initial.norm = data.norm;
  initial.anchor = cfg.anchor();

  std::vector<FeatureWindow> fit, validation;
  split_validation(data.windows.train, cfg.train.validation_fraction, fit, validation);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;

  TrainingRun run;
  run.train_windows = fit.size();
  run.validation_windows = validation.size();
  run.result = train(initial, fit, validation, tc, on_epoch);
  return run;
}

std::vector<ForecastRecord> forecast_records(const ModelState& model, std::span<const FeatureWindow> windows) {
  const auto preds = forward_batch(model, windows);
  std::vector<ForecastRecord> out;
  out.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    out.push_back({windows[i].target_time, preds[i].ghi_pred, windows[i].target_ghi,
                   windows[i].target_ghi_clear, preds[i].alpha});
  }
  return out;
}

}  // namespace tlmn
