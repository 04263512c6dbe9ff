#pragma once

#include <span>
#include <string>
#include <vector>

#include "tlmn/config.hpp"
#include "tlmn/evaluation.hpp"
#include "tlmn/features.hpp"
#include "tlmn/network.hpp"
#include "tlmn/training.hpp"

namespace tlmn {

struct PreparedData {
  FeatureSeries series;
  NormStats norm;
  WindowSets windows;
  std::vector<std::string> warnings;
};

/// Builds features and windows, fitting normalization on the training years.
PreparedData prepare_data(const RunConfig& cfg, std::span<const MeteoRecord> records);

/// Same, with fixed normalization (for a trained checkpoint).
PreparedData prepare_data(const RunConfig& cfg, std::span<const MeteoRecord> records,
                          const NormStats& norm);

struct TrainingRun {
  TrainResult result;
  std::size_t train_windows = 0;
  std::size_t validation_windows = 0;
};

/// Seeded initialization, chronological validation tail, then train().
TrainingRun train_model(const RunConfig& cfg, const PreparedData& data,
                        const EpochCallback& on_epoch = {});

std::vector<ForecastRecord> forecast_records(const ModelState& model,
                                             std::span<const FeatureWindow> windows);

}  // namespace tlmn
