#include "tlmn/network.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tlmn/error.hpp"
#include "tlmn/random.hpp"

namespace tlmn {

namespace {

constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluCubic = 0.044715;

std::string conv_name(std::size_t layer, const char* part) {
  return "conv" + std::to_string(layer + 1) + "." + part;
}

// Four partial sums keep the reduction vectorizable without reassociation
// flags while staying deterministic.
double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// out must be sized L x C_out.
void conv_forward(const Matrix& in, const double* weight, const double* bias,
                  std::size_t kernel, std::size_t dilation, Matrix& out) {
  const std::size_t len = in.rows();
  const std::size_t c_in = in.cols();
  const std::size_t c_out = out.cols();
  for (std::size_t t = 0; t < len; ++t) {
    double* dst = out.row(t).data();
    std::copy(bias, bias + c_out, dst);
    for (std::size_t j = 0; j < kernel; ++j) {
      const std::size_t back = (kernel - 1 - j) * dilation;
      if (back > t) continue;
      const double* src = in.row(t - back).data();
      const double* w = weight + j * c_in * c_out;
      for (std::size_t c = 0; c < c_in; ++c) {
        const double v = src[c];
        if (v != 0.0) axpy(v, w + c * c_out, dst, c_out);
      }
    }
  }
}

// Accumulates weight/bias gradients and, if d_in is non-null, writes the
// input gradient (d_in must be sized like `in` and zeroed).
void conv_backward(const Matrix& in, const double* weight, const Matrix& d_out,
                   std::size_t kernel, std::size_t dilation, double* d_weight,
                   double* d_bias, Matrix* d_in) {
  const std::size_t len = in.rows();
  const std::size_t c_in = in.cols();
  const std::size_t c_out = d_out.cols();
  for (std::size_t t = 0; t < len; ++t) {
    const double* g = d_out.row(t).data();
    for (std::size_t o = 0; o < c_out; ++o) d_bias[o] += g[o];
    for (std::size_t j = 0; j < kernel; ++j) {
      const std::size_t back = (kernel - 1 - j) * dilation;
      if (back > t) continue;
      const std::size_t s = t - back;
      const double* src = in.row(s).data();
      const double* w = weight + j * c_in * c_out;
      double* dw = d_weight + j * c_in * c_out;
      double* di = d_in ? d_in->row(s).data() : nullptr;
      for (std::size_t c = 0; c < c_in; ++c) {
        if (src[c] != 0.0) axpy(src[c], g, dw + c * c_out, c_out);
        if (di) di[c] += dot(w + c * c_out, g, c_out);
      }
    }
  }
}

void check_window(const ModelConfig& cfg, const FeatureWindow& w) {
  if (w.features.rows() != cfg.window_len || w.features.cols() != cfg.feature_width) {
    throw ShapeError("window features are " + std::to_string(w.features.rows()) + "x" +
                     std::to_string(w.features.cols()) + ", model expects " +
                     std::to_string(cfg.window_len) + "x" + std::to_string(cfg.feature_width));
  }
  if (w.celestial.rows() != cfg.window_len || w.celestial.cols() != cfg.celestial_dim) {
    throw ShapeError("window celestial block is " + std::to_string(w.celestial.rows()) + "x" +
                     std::to_string(w.celestial.cols()) + ", model expects " +
                     std::to_string(cfg.window_len) + "x" + std::to_string(cfg.celestial_dim));
  }
}

const double* tensor_ptr(const ModelState& s, const TensorSpec& spec) {
  return s.params.data() + spec.offset;
}

}  // namespace

// --- config / layout ----------------------------------------------------------

void ModelConfig::validate() const {
  if (feature_width < 1 || channels < 1 || head_hidden < 1 || celestial_dim < 1 ||
      conv_kernel < 1) {
    throw ConfigError("model dimensions must be positive");
  }
  if (manifold.k < 1 || manifold.stride < 1 || manifold.k > window_len) {
    throw ConfigError("manifold requires 1 <= k <= window_len and stride >= 1");
  }
  if (dilations.empty()) throw ConfigError("at least one convolution is required");
  for (std::size_t i = 0; i < dilations.size(); ++i) {
    const std::size_t d = dilations[i];
    if (d == 0 || (d & (d - 1)) != 0) {
      throw ConfigError("dilation " + std::to_string(d) + " is not a power of two");
    }
    if (i > 0 && d <= dilations[i - 1]) throw ConfigError("dilations must strictly increase");
  }
  if ((conv_kernel - 1) * dilations.back() >= seq_len()) {
    throw ConfigError("(kernel - 1) * max dilation must be below the manifold length " +
                      std::to_string(seq_len()));
  }
  if (!(alpha_min >= 0.0 && alpha_min < alpha_max && alpha_max <= 1.2)) {
    throw ConfigError("alpha bounds must satisfy 0 <= alpha_min < alpha_max <= 1.2");
  }
}

ParameterLayout ParameterLayout::for_config(const ModelConfig& cfg) {
  cfg.validate();
  ParameterLayout layout;
  auto add = [&](std::string name, std::vector<std::size_t> shape) {
    std::size_t size = 1;
    for (auto d : shape) size *= d;
    layout.tensors_.push_back({std::move(name), std::move(shape), layout.total_, size});
    layout.total_ += size;
  };
  std::size_t c_in = cfg.in_width();
  for (std::size_t l = 0; l < cfg.dilations.size(); ++l) {
    add(conv_name(l, "weight"), {cfg.conv_kernel, c_in, cfg.channels});
    add(conv_name(l, "bias"), {cfg.channels});
    c_in = cfg.channels;
  }
  add("calibration.weight", {2 * cfg.channels, cfg.celestial_dim});
  add("calibration.bias", {2 * cfg.channels});
  add("head.hidden.weight", {cfg.head_hidden, cfg.channels});
  add("head.hidden.bias", {cfg.head_hidden});
  add("head.out.weight", {1, cfg.head_hidden});
  add("head.out.bias", {1});
  return layout;
}

const TensorSpec& ParameterLayout::find(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw StateError("unknown parameter tensor '" + name + "'");
}

ParameterReport parameter_count(const ModelConfig& cfg) {
  cfg.validate();
  ParameterReport report;
  const std::string len = std::to_string(cfg.seq_len());
  const std::string ch = std::to_string(cfg.channels);
  report.layers.push_back(
      {"manifold (k=" + std::to_string(cfg.manifold.k) + ", stride=" +
           std::to_string(cfg.manifold.stride) + ")",
       "(B, " + len + ", " + std::to_string(cfg.in_width()) + ")", 0, 0});
  std::size_t c_in = cfg.in_width();
  for (std::size_t l = 0; l < cfg.dilations.size(); ++l) {
    report.layers.push_back({"conv" + std::to_string(l + 1) + " (k=" +
                                 std::to_string(cfg.conv_kernel) +
                                 ", d=" + std::to_string(cfg.dilations[l]) + ")",
                             "(B, " + len + ", " + ch + ")",
                             c_in * cfg.conv_kernel * cfg.channels, cfg.channels});
    c_in = cfg.channels;
  }
  report.layers.push_back({"spectral_calibration", "(B, " + len + ", " + ch + ")",
                           cfg.celestial_dim * 2 * cfg.channels, 2 * cfg.channels});
  report.layers.push_back({"head.hidden", "(B, " + std::to_string(cfg.head_hidden) + ")",
                           cfg.channels * cfg.head_hidden, cfg.head_hidden});
  report.layers.push_back({"head.out", "(B, 1)", cfg.head_hidden, 1});
  report.layers.push_back({"alpha_gate", "(B, 1)", 0, 0});
  for (const auto& l : report.layers) report.total += l.total();
  return report;
}

std::span<double> ModelState::tensor(const std::string& name) {
  const auto& spec = layout.find(name);
  return {params.data() + spec.offset, spec.size};
}

std::span<const double> ModelState::tensor(const std::string& name) const {
  const auto& spec = layout.find(name);
  return {params.data() + spec.offset, spec.size};
}

ModelState zero_model(const ModelConfig& cfg) {
  ModelState s;
  s.config = cfg;
  s.layout = ParameterLayout::for_config(cfg);
  s.params.assign(s.layout.total(), 0.0);
  return s;
}

ModelState initialize_model(const ModelConfig& cfg, std::uint64_t seed) {
  ModelState s = zero_model(cfg);
  Rng rng(seed);
  auto fill = [&](const std::string& name, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& w : s.tensor(name)) w = rng.uniform(-bound, bound);
  };
  std::size_t c_in = cfg.in_width();
  for (std::size_t l = 0; l < cfg.dilations.size(); ++l) {
    fill(conv_name(l, "weight"), cfg.conv_kernel * c_in);
    c_in = cfg.channels;
  }
  fill("head.hidden.weight", cfg.channels);
  fill("head.out.weight", cfg.head_hidden);
  return s;
}

// --- building blocks -----------------------------------------------------------

double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluScale * (x + kGeluCubic * x * x * x)));
}

double gelu_derivative(double x) {
  const double x2 = x * x;
  const double th = std::tanh(kGeluScale * (x + kGeluCubic * x2 * x));
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluScale * (1.0 + 3.0 * kGeluCubic * x2);
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix dilated_conv1d(const Matrix& input, std::span<const double> weight,
                      std::span<const double> bias, std::size_t kernel, std::size_t dilation) {
  if (kernel < 1 || dilation < 1) throw ShapeError("kernel and dilation must be >= 1");
  if (weight.size() != kernel * input.cols() * bias.size()) {
    throw ShapeError("conv weight has " + std::to_string(weight.size()) + " values, expected " +
                     std::to_string(kernel * input.cols() * bias.size()));
  }
  Matrix out(input.rows(), bias.size());
  conv_forward(input, weight.data(), bias.data(), kernel, dilation, out);
  return out;
}

Matrix spectral_calibration(const Matrix& hidden, const Matrix& celestial,
                            std::span<const double> weight, std::span<const double> bias) {
  const std::size_t c = hidden.cols();
  const std::size_t d = celestial.cols();
  if (celestial.rows() != hidden.rows()) throw ShapeError("calibration lengths differ");
  if (weight.size() != 2 * c * d || bias.size() != 2 * c) {
    throw ShapeError("calibration weights do not match hidden width");
  }
  Matrix out(hidden.rows(), c);
  for (std::size_t t = 0; t < hidden.rows(); ++t) {
    const double* cel = celestial.row(t).data();
    for (std::size_t o = 0; o < c; ++o) {
      const double raw_gamma = bias[o] + dot(weight.data() + o * d, cel, d);
      const double beta = bias[c + o] + dot(weight.data() + (c + o) * d, cel, d);
      out(t, o) = (1.0 + std::tanh(raw_gamma)) * hidden(t, o) + beta;
    }
  }
  return out;
}

double transmissivity_head(const Matrix& hidden, std::span<const double> hidden_weight,
                           std::span<const double> hidden_bias,
                           std::span<const double> out_weight, double out_bias,
                           Pooling pooling) {
  if (hidden.rows() < 1) throw ShapeError("head needs at least one position");
  const std::size_t c = hidden.cols();
  const std::size_t h = hidden_bias.size();
  if (hidden_weight.size() != h * c || out_weight.size() != h) {
    throw ShapeError("head weights do not match hidden width");
  }
  std::vector<double> pooled(c, 0.0);
  if (pooling == Pooling::last) {
    const auto last = hidden.row(hidden.rows() - 1);
    std::copy(last.begin(), last.end(), pooled.begin());
  } else {
    for (std::size_t t = 0; t < hidden.rows(); ++t) axpy(1.0, hidden.row(t).data(), pooled.data(), c);
    for (double& v : pooled) v /= static_cast<double>(hidden.rows());
  }
  double logit = out_bias;
  for (std::size_t j = 0; j < h; ++j) {
    logit += out_weight[j] * gelu(hidden_bias[j] + dot(hidden_weight.data() + j * c, pooled.data(), c));
  }
  return logit;
}

GateOutput alpha_gate(double alpha_logit, double ghi_clear, double alpha_min, double alpha_max) {
  GateOutput g;
  // The sum can round one ulp past alpha_max when the sigmoid saturates.
  g.alpha = std::min(alpha_min + (alpha_max - alpha_min) * sigmoid(alpha_logit), alpha_max);
  // Multiplicative zero, also when a diverged logit makes alpha NaN.
  g.ghi_pred = ghi_clear == 0.0 ? 0.0 : g.alpha * ghi_clear;
  return g;
}

// --- full model ----------------------------------------------------------------

Matrix celestial_positions(const Matrix& window_celestial, const ModelConfig& cfg) {
  const std::size_t len = cfg.seq_len();
  Matrix out(len, window_celestial.cols());
  for (std::size_t i = 0; i < len; ++i) {
    const auto src = window_celestial.row(i * cfg.manifold.stride + cfg.manifold.k - 1);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Prediction forward(const ModelState& state, const FeatureWindow& window, ForwardTrace* trace) {
  const ModelConfig& cfg = state.config;
  check_window(cfg, window);
  if (state.params.size() != state.layout.total()) {
    throw StateError("parameter vector does not match layout");
  }

  ForwardTrace local;
  ForwardTrace& tr = trace ? *trace : local;
  tr.valid = false;

  const std::size_t len = cfg.seq_len();
  const std::size_t ch = cfg.channels;
  const std::size_t layers = cfg.dilations.size();
  const auto& tensors = state.layout.tensors();

  tr.embedded = delay_embed(window.features, cfg.manifold).values;
  tr.pre.resize(layers);
  tr.post.resize(layers);
  const Matrix* input = &tr.embedded;
  for (std::size_t l = 0; l < layers; ++l) {
    tr.pre[l].assign_zero(len, ch);
    conv_forward(*input, tensor_ptr(state, tensors[2 * l]), tensor_ptr(state, tensors[2 * l + 1]),
                 cfg.conv_kernel, cfg.dilations[l], tr.pre[l]);
    tr.post[l].assign_zero(len, ch);
    const double* z = tr.pre[l].data();
    double* h = tr.post[l].data();
    for (std::size_t i = 0; i < len * ch; ++i) h[i] = gelu(z[i]);
    input = &tr.post[l];
  }

  // Spectral calibration (FiLM from the celestial anchors).
  tr.celestial = celestial_positions(window.celestial, cfg);
  const std::size_t dim = cfg.celestial_dim;
  const double* cw = tensor_ptr(state, tensors[2 * layers]);
  const double* cb = tensor_ptr(state, tensors[2 * layers + 1]);
  tr.gamma_tanh.assign_zero(len, ch);
  tr.calibrated.assign_zero(len, ch);
  for (std::size_t t = 0; t < len; ++t) {
    const double* cel = tr.celestial.row(t).data();
    for (std::size_t o = 0; o < ch; ++o) {
      const double g = std::tanh(cb[o] + dot(cw + o * dim, cel, dim));
      const double beta = cb[ch + o] + dot(cw + (ch + o) * dim, cel, dim);
      tr.gamma_tanh(t, o) = g;
      tr.calibrated(t, o) = (1.0 + g) * (*input)(t, o) + beta;
    }
  }

  // Pool and project to the transmissivity logit.
  tr.pooled.assign(ch, 0.0);
  if (cfg.pooling == Pooling::last) {
    const auto last = tr.calibrated.row(len - 1);
    std::copy(last.begin(), last.end(), tr.pooled.begin());
  } else {
    for (std::size_t t = 0; t < len; ++t) axpy(1.0, tr.calibrated.row(t).data(), tr.pooled.data(), ch);
    for (double& v : tr.pooled) v /= static_cast<double>(len);
  }
  const std::size_t hid = cfg.head_hidden;
  const double* w1 = tensor_ptr(state, tensors[2 * layers + 2]);
  const double* b1 = tensor_ptr(state, tensors[2 * layers + 3]);
  const double* w2 = tensor_ptr(state, tensors[2 * layers + 4]);
  const double b2 = *tensor_ptr(state, tensors[2 * layers + 5]);
  tr.head_pre.assign(hid, 0.0);
  tr.head_post.assign(hid, 0.0);
  double logit = b2;
  for (std::size_t j = 0; j < hid; ++j) {
    tr.head_pre[j] = b1[j] + dot(w1 + j * ch, tr.pooled.data(), ch);
    tr.head_post[j] = gelu(tr.head_pre[j]);
    logit += w2[j] * tr.head_post[j];
  }

  const GateOutput gate = alpha_gate(logit, window.target_ghi_clear, cfg.alpha_min, cfg.alpha_max);
  tr.logit = logit;
  tr.sigma = sigmoid(logit);
  tr.alpha = gate.alpha;
  tr.ghi_clear = window.target_ghi_clear;
  tr.ghi_pred = gate.ghi_pred;
  tr.state = &state;
  tr.revision = state.revision;
  tr.valid = true;
  return {gate.ghi_pred, gate.alpha, logit};
}

std::vector<Prediction> forward_batch(const ModelState& state,
                                      std::span<const FeatureWindow> windows) {
  std::vector<Prediction> out;
  out.reserve(windows.size());
  ForwardTrace scratch;
  for (const auto& w : windows) out.push_back(forward(state, w, &scratch));
  return out;
}

void backward(const ModelState& state, const ForwardTrace& trace, double d_pred,
              std::span<double> param_grad, Matrix* d_features) {
  if (!trace.valid || trace.state != &state) {
    throw StateError("backward requires a trace from forward on the same model");
  }
  if (trace.revision != state.revision) {
    throw StateError("stale forward trace: parameters changed since forward");
  }
  if (param_grad.size() != state.layout.total()) {
    throw ShapeError("gradient buffer does not match parameter layout");
  }
  const ModelConfig& cfg = state.config;
  const std::size_t len = cfg.seq_len();
  const std::size_t ch = cfg.channels;
  const std::size_t layers = cfg.dilations.size();
  const std::size_t hid = cfg.head_hidden;
  const std::size_t dim = cfg.celestial_dim;
  const auto& tensors = state.layout.tensors();
  auto grad_ptr = [&](std::size_t i) { return param_grad.data() + tensors[i].offset; };

  if (d_features) d_features->assign_zero(cfg.window_len, cfg.feature_width);

  const double d_logit =
      d_pred * trace.ghi_clear * (cfg.alpha_max - cfg.alpha_min) * trace.sigma * (1.0 - trace.sigma);
  // The gate multiplies the whole chain; a zero here zeroes every gradient.
  if (d_logit == 0.0) return;

  // Head.
  const double* w1 = tensor_ptr(state, tensors[2 * layers + 2]);
  const double* w2 = tensor_ptr(state, tensors[2 * layers + 4]);
  double* gw1 = grad_ptr(2 * layers + 2);
  double* gb1 = grad_ptr(2 * layers + 3);
  double* gw2 = grad_ptr(2 * layers + 4);
  double* gb2 = grad_ptr(2 * layers + 5);
  *gb2 += d_logit;
  std::vector<double> d_pooled(ch, 0.0);
  for (std::size_t j = 0; j < hid; ++j) {
    gw2[j] += d_logit * trace.head_post[j];
    const double d_pre = d_logit * w2[j] * gelu_derivative(trace.head_pre[j]);
    gb1[j] += d_pre;
    axpy(d_pre, trace.pooled.data(), gw1 + j * ch, ch);
    axpy(d_pre, w1 + j * ch, d_pooled.data(), ch);
  }

  // Pooling.
  Matrix d_cal(len, ch);
  if (cfg.pooling == Pooling::last) {
    std::copy(d_pooled.begin(), d_pooled.end(), d_cal.row(len - 1).begin());
  } else {
    const double inv = 1.0 / static_cast<double>(len);
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t o = 0; o < ch; ++o) d_cal(t, o) = d_pooled[o] * inv;
    }
  }

  // Calibration.
  const Matrix& h_last = trace.post[layers - 1];
  double* gcw = grad_ptr(2 * layers);
  double* gcb = grad_ptr(2 * layers + 1);
  Matrix d_hidden(len, ch);
  for (std::size_t t = 0; t < len; ++t) {
    const double* cel = trace.celestial.row(t).data();
    for (std::size_t o = 0; o < ch; ++o) {
      const double du = d_cal(t, o);
      if (du == 0.0) continue;
      const double g = trace.gamma_tanh(t, o);
      d_hidden(t, o) = du * (1.0 + g);
      const double d_raw_gamma = du * h_last(t, o) * (1.0 - g * g);
      gcb[o] += d_raw_gamma;
      gcb[ch + o] += du;
      axpy(d_raw_gamma, cel, gcw + o * dim, dim);
      axpy(du, cel, gcw + (ch + o) * dim, dim);
    }
  }

  // Conv stack, last layer first.
  Matrix d_out = std::move(d_hidden);
  for (std::size_t l = layers; l-- > 0;) {
    const Matrix& z = trace.pre[l];
    for (std::size_t i = 0; i < len * ch; ++i) d_out.data()[i] *= gelu_derivative(z.data()[i]);
    const Matrix& in = l == 0 ? trace.embedded : trace.post[l - 1];
    const bool need_input = l > 0 || d_features != nullptr;
    Matrix d_in;
    if (need_input) d_in.assign_zero(in.rows(), in.cols());
    conv_backward(in, tensor_ptr(state, tensors[2 * l]), d_out, cfg.conv_kernel, cfg.dilations[l],
                  grad_ptr(2 * l), grad_ptr(2 * l + 1), need_input ? &d_in : nullptr);
    if (l == 0) {
      if (d_features) *d_features = delay_embed_adjoint(d_in, cfg.window_len, cfg.manifold);
    } else {
      d_out = std::move(d_in);
    }
  }
}

}  // namespace tlmn
