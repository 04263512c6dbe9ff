#include "tlmn/config.hpp"

#include <fstream>
#include <initializer_list>
#include <string_view>

#include "tlmn/error.hpp"

namespace tlmn {

namespace {

void require_object(const Json& j, std::string_view context) {
  if (!j.is_object()) throw ConfigError(std::string(context) + " must be a JSON object");
}

void check_keys(const Json& j, std::initializer_list<std::string_view> allowed,
                std::string_view context) {
  require_object(j, context);
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw ConfigError("unknown key '" + key + "' in " + std::string(context));
  }
}

template <typename T>
void read(const Json& j, const char* key, T& out, std::string_view context) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError("bad value for '" + std::string(key) + "' in " + std::string(context) +
                      ": " + e.what());
  }
}

}  // namespace

Json to_json(const GeoLocation& loc) {
  return {{"latitude", loc.latitude()}, {"longitude", loc.longitude()}, {"altitude", loc.altitude()}};
}

GeoLocation location_from_json(const Json& j) {
  check_keys(j, {"latitude", "longitude", "altitude"}, "location");
  const GeoLocation d = omdurman();
  double lat = d.latitude(), lon = d.longitude(), alt = d.altitude();
  read(j, "latitude", lat, "location");
  read(j, "longitude", lon, "location");
  read(j, "altitude", alt, "location");
  return GeoLocation(lat, lon, alt);
}

Json to_json(const ClearSkyParams& p) {
  Json j{{"linke_turbidity", p.linke_turbidity}, {"solar_constant", p.solar_constant}};
  j["monthly_turbidity"] = p.monthly_turbidity ? Json(*p.monthly_turbidity) : Json(nullptr);
  return j;
}

ClearSkyParams clear_sky_from_json(const Json& j) {
  check_keys(j, {"linke_turbidity", "solar_constant", "monthly_turbidity"}, "clear_sky");
  ClearSkyParams p;
  read(j, "linke_turbidity", p.linke_turbidity, "clear_sky");
  read(j, "solar_constant", p.solar_constant, "clear_sky");
  if (j.contains("monthly_turbidity") && !j["monthly_turbidity"].is_null()) {
    std::array<double, 12> table{};
    read(j, "monthly_turbidity", table, "clear_sky");
    p.monthly_turbidity = table;
  }
  p.validate();
  return p;
}

Json to_json(const FeatureOptions& o) {
  return {{"utc_offset_hours", o.utc_offset_hours}, {"memory_window", o.memory_window}};
}

FeatureOptions feature_options_from_json(const Json& j) {
  check_keys(j, {"utc_offset_hours", "memory_window"}, "features");
  FeatureOptions o;
  read(j, "utc_offset_hours", o.utc_offset_hours, "features");
  read(j, "memory_window", o.memory_window, "features");
  if (o.memory_window < 1) throw ConfigError("features.memory_window must be >= 1");
  return o;
}

Json to_json(const SplitSpec& s) {
  return {{"train", {s.train.first, s.train.last}}, {"test", {s.test.first, s.test.last}}};
}

SplitSpec split_from_json(const Json& j) {
  check_keys(j, {"train", "test"}, "split");
  SplitSpec s;
  auto range = [&](const char* key, YearRange& r) {
    std::array<int, 2> v{r.first, r.last};
    read(j, key, v, "split");
    r = {v[0], v[1]};
  };
  range("train", s.train);
  range("test", s.test);
  s.validate();
  return s;
}

Json to_json(const ModelConfig& c) {
  return {{"window_len", c.window_len},
          {"feature_width", c.feature_width},
          {"embed_k", c.manifold.k},
          {"embed_stride", c.manifold.stride},
          {"channels", c.channels},
          {"conv_kernel", c.conv_kernel},
          {"dilations", c.dilations},
          {"head_hidden", c.head_hidden},
          {"celestial_dim", c.celestial_dim},
          {"alpha_min", c.alpha_min},
          {"alpha_max", c.alpha_max},
          {"pooling", c.pooling == Pooling::last ? "last" : "mean"}};
}

ModelConfig model_config_from_json(const Json& j) {
  constexpr std::string_view ctx = "model";
  check_keys(j,
             {"window_len", "feature_width", "embed_k", "embed_stride", "channels", "conv_kernel",
              "dilations", "head_hidden", "celestial_dim", "alpha_min", "alpha_max", "pooling"},
             ctx);
  ModelConfig c;
  read(j, "window_len", c.window_len, ctx);
  read(j, "feature_width", c.feature_width, ctx);
  read(j, "embed_k", c.manifold.k, ctx);
  read(j, "embed_stride", c.manifold.stride, ctx);
  read(j, "channels", c.channels, ctx);
  read(j, "conv_kernel", c.conv_kernel, ctx);
  read(j, "dilations", c.dilations, ctx);
  read(j, "head_hidden", c.head_hidden, ctx);
  read(j, "celestial_dim", c.celestial_dim, ctx);
  read(j, "alpha_min", c.alpha_min, ctx);
  read(j, "alpha_max", c.alpha_max, ctx);
  std::string pooling = "last";
  read(j, "pooling", pooling, ctx);
  if (pooling == "last") {
    c.pooling = Pooling::last;
  } else if (pooling == "mean") {
    c.pooling = Pooling::mean;
  } else {
    throw ConfigError("model.pooling must be 'last' or 'mean'");
  }
  c.validate();
  return c;
}

Json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"lr_patience", c.lr_patience},
          {"stop_patience", c.stop_patience},
          {"lr_decay_factor", c.lr_decay_factor},
          {"min_learning_rate", c.min_learning_rate},
          {"min_improvement", c.min_improvement},
          {"validation_fraction", c.validation_fraction},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"threads", c.threads}};
}

TrainConfig train_config_from_json(const Json& j) {
  constexpr std::string_view ctx = "train";
  check_keys(j,
             {"learning_rate", "batch_size", "max_epochs", "lr_patience", "stop_patience",
              "lr_decay_factor", "min_learning_rate", "min_improvement", "validation_fraction",
              "beta1", "beta2", "epsilon", "threads"},
             ctx);
  TrainConfig c;
  read(j, "learning_rate", c.learning_rate, ctx);
  read(j, "batch_size", c.batch_size, ctx);
  read(j, "max_epochs", c.max_epochs, ctx);
  read(j, "lr_patience", c.lr_patience, ctx);
  read(j, "stop_patience", c.stop_patience, ctx);
  read(j, "lr_decay_factor", c.lr_decay_factor, ctx);
  read(j, "min_learning_rate", c.min_learning_rate, ctx);
  read(j, "min_improvement", c.min_improvement, ctx);
  read(j, "validation_fraction", c.validation_fraction, ctx);
  read(j, "beta1", c.beta1, ctx);
  read(j, "beta2", c.beta2, ctx);
  read(j, "epsilon", c.epsilon, ctx);
  read(j, "threads", c.threads, ctx);
  c.validate();
  return c;
}

Json to_json(const NormStats& s) {
  return {{"mean", s.mean}, {"std", s.stddev}, {"exempt", s.exempt}};
}

NormStats norm_stats_from_json(const Json& j) {
  check_keys(j, {"mean", "std", "exempt"}, "norm_stats");
  NormStats s;
  try {
    s.mean = j.at("mean").get<std::array<double, kFeatureCount>>();
    s.stddev = j.at("std").get<std::array<double, kFeatureCount>>();
    s.exempt = j.at("exempt").get<std::array<bool, kFeatureCount>>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("bad norm_stats: ") + e.what());
  }
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (!s.exempt[i] && !(s.stddev[i] > 0.0)) {
      throw ConfigError("norm_stats std must be positive for feature " +
                        std::string(kFeatureNames[i]));
    }
  }
  return s;
}

Json to_json(const AnchorConfig& a) {
  return {{"location", to_json(a.location)},
          {"clear_sky", to_json(a.clear_sky)},
          {"features", to_json(a.features)}};
}

AnchorConfig anchor_from_json(const Json& j) {
  check_keys(j, {"location", "clear_sky", "features"}, "anchor");
  AnchorConfig a;
  if (j.contains("location")) a.location = location_from_json(j["location"]);
  if (j.contains("clear_sky")) a.clear_sky = clear_sky_from_json(j["clear_sky"]);
  if (j.contains("features")) a.features = feature_options_from_json(j["features"]);
  return a;
}

void RunConfig::validate() const {
  clear_sky.validate();
  split.validate();
  model.validate();
  train.validate();
  if (model.feature_width != kFeatureCount) {
    throw ConfigError("model.feature_width must equal the feature count (22)");
  }
  if (model.celestial_dim != kCelestialDim) {
    throw ConfigError("model.celestial_dim must be 3");
  }
}

Json to_json(const RunConfig& c) {
  return {{"location", to_json(c.location)},
          {"clear_sky", to_json(c.clear_sky)},
          {"features", to_json(c.features)},
          {"split", to_json(c.split)},
          {"model", to_json(c.model)},
          {"train", to_json(c.train)},
          {"paths",
           {{"data", c.paths.data},
            {"cache_dir", c.paths.cache_dir},
            {"checkpoint", c.paths.checkpoint},
            {"report_dir", c.paths.report_dir}}},
          {"seed", c.seed}};
}

RunConfig run_config_from_json(const Json& j) {
  check_keys(j, {"location", "clear_sky", "features", "split", "model", "train", "paths", "seed"},
             "config");
  RunConfig c;
  if (j.contains("location")) c.location = location_from_json(j["location"]);
  if (j.contains("clear_sky")) c.clear_sky = clear_sky_from_json(j["clear_sky"]);
  if (j.contains("features")) c.features = feature_options_from_json(j["features"]);
  if (j.contains("split")) c.split = split_from_json(j["split"]);
  if (j.contains("model")) c.model = model_config_from_json(j["model"]);
  if (j.contains("train")) c.train = train_config_from_json(j["train"]);
  if (j.contains("paths")) {
    const Json& p = j["paths"];
    check_keys(p, {"data", "cache_dir", "checkpoint", "report_dir"}, "paths");
    read(p, "data", c.paths.data, "paths");
    read(p, "cache_dir", c.paths.cache_dir, "paths");
    read(p, "checkpoint", c.paths.checkpoint, "paths");
    read(p, "report_dir", c.paths.report_dir, "paths");
  }
  read(j, "seed", c.seed, "config");
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace tlmn
