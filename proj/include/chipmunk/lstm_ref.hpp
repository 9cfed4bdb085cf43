// Golden references.
//
// lstm_step_float implements the canonical LSTM equations in double
// precision:
//   i = sigmoid(W_xi x + W_hi h' + w_ci . c' + b_i)
//   f = sigmoid(W_xf x + W_hf h' + w_cf . c' + b_f)
//   c = f . c' + i . tanh(W_xc x + W_hc h' + b_c)     (no peephole here)
//   o = sigmoid(W_xo x + W_ho h' + w_co . c + b_o)    (peephole on NEW c)
//   h = o . tanh(c)
// plus the dense output y = sigmoid(W_hy h).
//
// lstm_step_quant is the fixed-point golden model every hardware model must
// match bit for bit. The accumulation semantics are hierarchical: within a
// `block`-wide column block the products chain left-to-right through a
// saturating 16-bit accumulator starting from zero, and the per-block
// partial sums are then folded (saturating, left-to-right) in the canonical
// block order: x blocks ascending, then h blocks ascending. Bias (shifted to
// accumulator scale) and the peephole product are folded next, then a single
// rescale feeds the activation LUT. This is exactly the composition a tile
// grid produces, which is what makes systolic equivalence well-defined under
// saturation.
#pragma once

#include <span>
#include <vector>

#include "chipmunk/model.hpp"
#include "chipmunk/quantized.hpp"

namespace chipmunk {

// Accumulation order across weight blocks. Only the canonical order is
// implemented: per gate (i, f, c, o), x blocks ascending, then h blocks
// ascending, columns ascending within a block.
enum class BlockOrder : uint8_t { canonical };

// --- double-precision reference ---------------------------------------------

struct FloatStepResult {
  std::vector<double> h;
  LstmStateF state;
};

FloatStepResult lstm_step_float(const LstmLayerParams& params,
                                std::span<const double> x,
                                const LstmStateF& state);

std::vector<double> dense_output_float(const DenseParams& params,
                                       std::span<const double> h);

// Convenience: run all layers (+ dense) over a frame sequence.
struct FloatRun {
  std::vector<std::vector<double>> h_frames;  // final layer h per frame
  std::vector<std::vector<double>> y_frames;  // empty when no dense layer
};
FloatRun run_float(const NetworkModel& net,
                   const std::vector<std::vector<double>>& frames);

// --- quantized golden model --------------------------------------------------

// Recurrent state on the padded shape.
struct QuantState {
  std::vector<int8_t> c;
  std::vector<int8_t> h;

  static QuantState zeros(int n_h_pad) {
    return QuantState{std::vector<int8_t>(n_h_pad, 0),
                      std::vector<int8_t>(n_h_pad, 0)};
  }
};

struct QuantStepResult {
  std::vector<int8_t> h;  // padded
  QuantState state;
};

// x must already be quantized to the state format and padded to n_x_pad.
QuantStepResult lstm_step_quant(const QuantizedLayer& layer,
                                std::span<const int8_t> x,
                                const QuantState& state, const ActLuts& luts,
                                BlockOrder order = BlockOrder::canonical);

// y = sigmoid(W_hy h), same fold semantics, no bias. Returns n_y values.
std::vector<int8_t> dense_output_quant(const QuantizedDense& dense,
                                       std::span<const int8_t> h,
                                       const ActLuts& luts);

// Shared fold primitive: folds the per-block saturating chains of
// `row' x vec` into acc (one int16 per row). Used by the golden model, the
// tile and the dense path so all routes share one definition of the
// arithmetic, while the *composition order* is exercised independently.
void fold_block_raw(int16_t& acc, const int8_t* w_row, const int8_t* vec,
                    int width);

// Quantize + pad one real-valued frame to the state format.
std::vector<int8_t> quantize_frame(std::span<const double> x,
                                   const FxFormat& state_fmt, int padded_len);

// Full-network golden step over quantized layers, threading h into the next
// layer's x. Returns per-layer padded h plus dense output when present.
struct QuantNetState {
  std::vector<QuantState> layers;
};

struct QuantNetStepResult {
  std::vector<int8_t> h;  // last layer, padded
  std::vector<int8_t> y;  // dense (unpadded rows), empty if none
};

QuantNetState make_zero_state(const QuantizedNetwork& net);

QuantNetStepResult network_step_quant(const QuantizedNetwork& net,
                                      std::span<const int8_t> x_padded,
                                      QuantNetState& state, const ActLuts& luts);

}  // namespace chipmunk
