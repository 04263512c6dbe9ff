#include "tlmn/manifold.hpp"

#include <algorithm>
#include <string>

#include "tlmn/error.hpp"

namespace tlmn {

namespace {

void check_config(const ManifoldConfig& cfg, std::size_t source_len) {
  if (cfg.k < 1 || cfg.stride < 1) {
    throw ShapeError("manifold config requires k >= 1 and stride >= 1");
  }
  if (source_len < cfg.k) {
    throw ShapeError("window length " + std::to_string(source_len) +
                     " shorter than embedding length k = " + std::to_string(cfg.k));
  }
}

}  // namespace

ManifoldTensor delay_embed(const Matrix& window, const ManifoldConfig& cfg) {
  check_config(cfg, window.rows());
  const std::size_t width = window.cols();
  const std::size_t rows = embedded_length(window.rows(), cfg);
  ManifoldTensor out{Matrix(rows, width * cfg.k), window.rows(), width};
  for (std::size_t i = 0; i < rows; ++i) {
    auto dst = out.values.row(i).begin();
    for (std::size_t lag = 0; lag < cfg.k; ++lag) {
      const auto src = window.row(i * cfg.stride + lag);
      dst = std::copy(src.begin(), src.end(), dst);
    }
  }
  return out;
}

Matrix delay_embed_adjoint(const Matrix& grad, std::size_t source_len, const ManifoldConfig& cfg) {
  check_config(cfg, source_len);
  if (grad.rows() != embedded_length(source_len, cfg) || grad.cols() % cfg.k != 0) {
    throw ShapeError("embedding gradient shape does not match config");
  }
  const std::size_t width = grad.cols() / cfg.k;
  Matrix out(source_len, width);
  for (std::size_t i = 0; i < grad.rows(); ++i) {
    for (std::size_t lag = 0; lag < cfg.k; ++lag) {
      auto dst = out.row(i * cfg.stride + lag);
      for (std::size_t f = 0; f < width; ++f) dst[f] += grad(i, lag * width + f);
    }
  }
  return out;
}

Matrix reconstruct_window(const ManifoldTensor& tensor, const ManifoldConfig& cfg) {
  if (cfg.stride != 1) throw ShapeError("reconstruction requires stride 1");
  check_config(cfg, tensor.source_len);
  const std::size_t width = tensor.feature_width;
  Matrix out(tensor.source_len, width);
  for (std::size_t src = 0; src < tensor.source_len; ++src) {
    // Earliest output row that contains source row `src`, and its lag slot.
    const std::size_t row = src < cfg.k ? 0 : src - cfg.k + 1;
    const std::size_t lag = src - row;
    for (std::size_t f = 0; f < width; ++f) out(src, f) = tensor.values(row, lag * width + f);
  }
  return out;
}

}  // namespace tlmn
