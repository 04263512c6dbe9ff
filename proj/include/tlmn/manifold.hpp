#pragma once

#include <cstddef>

#include "tlmn/matrix.hpp"

namespace tlmn {

struct ManifoldConfig {
  std::size_t k = 5;
  std::size_t stride = 1;

  bool operator==(const ManifoldConfig&) const = default;
};

/// Delay-embedded window. Row i concatenates source rows
/// [i*stride, ..., i*stride + k - 1], oldest first, features contiguous per lag.
struct ManifoldTensor {
  Matrix values;
  std::size_t source_len = 0;
  std::size_t feature_width = 0;
};

inline std::size_t embedded_length(std::size_t source_len, const ManifoldConfig& cfg) {
  return (source_len - cfg.k) / cfg.stride + 1;
}

/// Throws ShapeError when the window is shorter than k or the config is invalid.
ManifoldTensor delay_embed(const Matrix& window, const ManifoldConfig& cfg);

/// Adjoint of delay_embed: scatters gradients back onto the source rows.
Matrix delay_embed_adjoint(const Matrix& grad, std::size_t source_len, const ManifoldConfig& cfg);

/// Inverse for stride 1 (every source row appears in some output row).
Matrix reconstruct_window(const ManifoldTensor& tensor, const ManifoldConfig& cfg);

}  // namespace tlmn
