#include "chipmunk/quantized.hpp"

#include "chipmunk/common.hpp"

namespace chipmunk {

void QuantizedLayer::validate() const {
  fmts.validate();
  if (block <= 0) throw DimensionError("QuantizedLayer: block must be positive");
  if (n_x <= 0 || n_h <= 0)
    throw DimensionError("QuantizedLayer: n_x and n_h must be positive");
  if (n_x_pad % block != 0 || n_h_pad % block != 0)
    throw DimensionError("QuantizedLayer: padded dims must be block multiples");
  if (n_x_pad < n_x || n_h_pad < n_h)
    throw DimensionError("QuantizedLayer: padded dims smaller than real dims");
  for (int g = 0; g < 4; ++g) {
    if (wx[g].size() != size_t(n_h_pad) * size_t(n_x_pad) ||
        wh[g].size() != size_t(n_h_pad) * size_t(n_h_pad) ||
        bias[g].size() != size_t(n_h_pad))
      throw DimensionError("QuantizedLayer: tensor sizes inconsistent");
  }
  for (const auto& p : peephole)
    if (p.size() != size_t(n_h_pad))
      throw DimensionError("QuantizedLayer: peephole size inconsistent");
}

}  // namespace chipmunk
