#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "tlmn/features.hpp"
#include "tlmn/network.hpp"
#include "tlmn/solar_geometry.hpp"
#include "tlmn/training.hpp"

namespace tlmn {

using Json = nlohmann::json;

// Each *_from_json rejects unknown keys with ConfigError; missing keys keep
// their defaults.
Json to_json(const GeoLocation& loc);
GeoLocation location_from_json(const Json& j);

Json to_json(const ClearSkyParams& p);
ClearSkyParams clear_sky_from_json(const Json& j);

Json to_json(const FeatureOptions& o);
FeatureOptions feature_options_from_json(const Json& j);

Json to_json(const SplitSpec& s);
SplitSpec split_from_json(const Json& j);

Json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const Json& j);

Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j);

Json to_json(const NormStats& s);
NormStats norm_stats_from_json(const Json& j);

Json to_json(const AnchorConfig& a);
AnchorConfig anchor_from_json(const Json& j);

struct PathsConfig {
  std::string data = "data.csv";
  std::string cache_dir = ".tlmn-cache";
  std::string checkpoint = "model.tlmn3";
  std::string report_dir = "report";

  bool operator==(const PathsConfig&) const = default;
};

/// Everything a pipeline run needs. Serializes to a single JSON document.
struct RunConfig {
  GeoLocation location = omdurman();
  ClearSkyParams clear_sky{};
  FeatureOptions features{};
  SplitSpec split{};
  ModelConfig model{};
  TrainConfig train{};
  PathsConfig paths{};
  std::uint64_t seed = 42;

  AnchorConfig anchor() const { return {location, clear_sky, features}; }
  /// Validates every section; throws ConfigError or DomainError.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

Json to_json(const RunConfig& c);
RunConfig run_config_from_json(const Json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Environment variable that overrides the fetch cache directory.
inline constexpr const char* kCacheDirEnv = "TLMN_CACHE_DIR";

}  // namespace tlmn
