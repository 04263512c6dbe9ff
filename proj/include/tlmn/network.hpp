#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tlmn/features.hpp"
#include "tlmn/manifold.hpp"
#include "tlmn/matrix.hpp"
#include "tlmn/solar_geometry.hpp"

namespace tlmn {

/// Temporal reduction applied before the transmissivity head.
enum class Pooling { last, mean };

struct ModelConfig {
  std::size_t window_len = 24;
  std::size_t feature_width = kFeatureCount;
  ManifoldConfig manifold{};
  std::size_t channels = 64;
  std::size_t conv_kernel = 4;
  std::vector<std::size_t> dilations{1, 2, 4};
  std::size_t head_hidden = 32;
  std::size_t celestial_dim = kCelestialDim;
  double alpha_min = 0.0;
  double alpha_max = 1.0;
  Pooling pooling = Pooling::last;

  std::size_t seq_len() const { return embedded_length(window_len, manifold); }
  std::size_t in_width() const { return feature_width * manifold.k; }

  /// Throws ConfigError.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

struct TensorSpec {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;  ///< in parameters, into the flat vector
  std::size_t size = 0;

  bool operator==(const TensorSpec&) const = default;
};

/// Flat parameter layout. Conv weights are [kernel, in, out] with tap
/// kernel-1 reading the current position; dense weights are [out, in].
class ParameterLayout {
 public:
  static ParameterLayout for_config(const ModelConfig& cfg);

  const std::vector<TensorSpec>& tensors() const noexcept { return tensors_; }
  std::size_t total() const noexcept { return total_; }
  /// Throws StateError for an unknown name.
  const TensorSpec& find(const std::string& name) const;

  bool operator==(const ParameterLayout&) const = default;

 private:
  std::vector<TensorSpec> tensors_;
  std::size_t total_ = 0;
};

struct LayerCount {
  std::string layer;
  std::string output_shape;
  std::size_t weights = 0;
  std::size_t biases = 0;
  std::size_t total() const { return weights + biases; }
};

struct ParameterReport {
  std::vector<LayerCount> layers;
  std::size_t total = 0;
};

/// Trainable-parameter total reported for the published architecture.
inline constexpr std::size_t kReferenceParameterCount = 63458;

/// Closed-form per-layer parameter counts.
ParameterReport parameter_count(const ModelConfig& cfg);

/// Site and clear-sky settings a checkpoint was trained against.
struct AnchorConfig {
  GeoLocation location = omdurman();
  ClearSkyParams clear_sky{};
  FeatureOptions features{};

  bool operator==(const AnchorConfig&) const = default;
};

struct ModelState {
  ModelConfig config;
  ParameterLayout layout;
  std::vector<double> params;
  NormStats norm = identity_norm_stats();
  std::optional<AnchorConfig> anchor;
  /// Bumped whenever parameters change; traces record it.
  std::uint64_t revision = 0;

  std::span<double> tensor(const std::string& name);
  std::span<const double> tensor(const std::string& name) const;
};

/// All parameters zero (calibration starts at identity, alpha at the midpoint).
ModelState zero_model(const ModelConfig& cfg);

/// Fan-in scaled uniform for convs and head, zeros for calibration and biases.
ModelState initialize_model(const ModelConfig& cfg, std::uint64_t seed);

// --- building blocks ---------------------------------------------------------

/// Tanh-approximation GELU.
double gelu(double x);
double gelu_derivative(double x);

/// Causal dilated convolution, zero left padding, same length. `weight` is
/// [kernel, C_in, C_out]; C_out = bias.size().
Matrix dilated_conv1d(const Matrix& input, std::span<const double> weight,
                      std::span<const double> bias, std::size_t kernel, std::size_t dilation);

/// FiLM: [raw_gamma, beta] = W c_t + b; out_t = (1 + tanh(raw_gamma)) * h_t + beta.
/// `weight` is [2C, D].
Matrix spectral_calibration(const Matrix& hidden, const Matrix& celestial,
                            std::span<const double> weight, std::span<const double> bias);

/// Dense C->H, GELU, dense H->1 on the pooled hidden state.
double transmissivity_head(const Matrix& hidden, std::span<const double> hidden_weight,
                           std::span<const double> hidden_bias,
                           std::span<const double> out_weight, double out_bias,
                           Pooling pooling = Pooling::last);

double sigmoid(double x);

struct GateOutput {
  double ghi_pred = 0.0;
  double alpha = 0.0;
};

/// alpha = lo + (hi - lo) * sigmoid(logit); prediction = alpha * ghi_clear.
GateOutput alpha_gate(double alpha_logit, double ghi_clear, double alpha_min, double alpha_max);

// --- full model --------------------------------------------------------------

struct ForwardTrace {
  const ModelState* state = nullptr;
  std::uint64_t revision = 0;
  bool valid = false;

  Matrix embedded;                   // seq_len x in_width
  std::vector<Matrix> pre;           // per conv: pre-activation
  std::vector<Matrix> post;          // per conv: GELU output
  Matrix celestial;                  // seq_len x celestial_dim
  Matrix gamma_tanh;                 // tanh(raw_gamma)
  Matrix calibrated;                 // seq_len x channels
  std::vector<double> pooled;        // channels
  std::vector<double> head_pre;      // head_hidden
  std::vector<double> head_post;     // head_hidden
  double logit = 0.0;
  double sigma = 0.0;
  double alpha = 0.0;
  double ghi_clear = 0.0;
  double ghi_pred = 0.0;
};

struct Prediction {
  double ghi_pred = 0.0;
  double alpha = 0.0;
  double logit = 0.0;
};

/// Celestial row for manifold position i is window row i*stride + k - 1.
Matrix celestial_positions(const Matrix& window_celestial, const ModelConfig& cfg);

/// Throws ShapeError when the window does not match the config.
Prediction forward(const ModelState& state, const FeatureWindow& window,
                   ForwardTrace* trace = nullptr);

std::vector<Prediction> forward_batch(const ModelState& state,
                                      std::span<const FeatureWindow> windows);

/// Accumulates d(loss)/d(params) into `param_grad` (layout.total() long)
/// given d(loss)/d(prediction). Optionally writes d(loss)/d(window features).
/// Throws StateError when the trace is missing or stale.
void backward(const ModelState& state, const ForwardTrace& trace, double d_pred,
              std::span<double> param_grad, Matrix* d_features = nullptr);

}  // namespace tlmn
