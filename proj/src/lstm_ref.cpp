#include "chipmunk/lstm_ref.hpp"

#include <cmath>

namespace chipmunk {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_len(size_t got, size_t want, const char* what) {
  if (got != want)
    throw DimensionError(std::string(what) + ": expected length " +
                         std::to_string(want) + ", got " +
                         std::to_string(got));
}

std::vector<double> matvec(const Mat& w, std::span<const double> v) {
  std::vector<double> out(w.rows, 0.0);
  for (int r = 0; r < w.rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < w.cols; ++c) s += w(r, c) * v[c];
    out[r] = s;
  }
  return out;
}

}  // namespace

FloatStepResult lstm_step_float(const LstmLayerParams& params,
                                std::span<const double> x,
                                const LstmStateF& state) {
  params.validate();
  check_len(x.size(), size_t(params.n_x), "x");
  check_len(state.c.size(), size_t(params.n_h), "state.c");
  check_len(state.h.size(), size_t(params.n_h), "state.h");
  const int n = params.n_h;

  auto zi = matvec(params.w_xi, x);
  auto zf = matvec(params.w_xf, x);
  auto zc = matvec(params.w_xc, x);
  auto zo = matvec(params.w_xo, x);
  auto ri = matvec(params.w_hi, state.h);
  auto rf = matvec(params.w_hf, state.h);
  auto rc = matvec(params.w_hc, state.h);
  auto ro = matvec(params.w_ho, state.h);

  FloatStepResult out;
  out.state.c.resize(n);
  out.state.h.resize(n);
  for (int j = 0; j < n; ++j) {
    double i = sigmoid(zi[j] + ri[j] + params.w_ci[j] * state.c[j] + params.b_i[j]);
    double f = sigmoid(zf[j] + rf[j] + params.w_cf[j] * state.c[j] + params.b_f[j]);
    double g = std::tanh(zc[j] + rc[j] + params.b_c[j]);
    double c = f * state.c[j] + i * g;
    double o = sigmoid(zo[j] + ro[j] + params.w_co[j] * c + params.b_o[j]);
    out.state.c[j] = c;
    out.state.h[j] = o * std::tanh(c);
  }
  out.h = out.state.h;
  return out;
}

std::vector<double> dense_output_float(const DenseParams& params,
                                       std::span<const double> h) {
  check_len(h.size(), size_t(params.n_h()), "h");
  auto z = matvec(params.w_hy, h);
  for (auto& v : z) v = sigmoid(v);
  return z;
}

FloatRun run_float(const NetworkModel& net,
                   const std::vector<std::vector<double>>& frames) {
  net.validate();
  std::vector<LstmStateF> states;
  states.reserve(net.layers.size());
  for (const auto& l : net.layers) states.push_back(LstmStateF::zeros(l.n_h));

  FloatRun run;
  for (const auto& frame : frames) {
    std::vector<double> x = frame;
    for (size_t l = 0; l < net.layers.size(); ++l) {
      auto r = lstm_step_float(net.layers[l], x, states[l]);
      states[l] = std::move(r.state);
      x = std::move(r.h);
    }
    if (net.dense) run.y_frames.push_back(dense_output_float(*net.dense, x));
    run.h_frames.push_back(std::move(x));
  }
  return run;
}

// --- quantized golden ---------------------------------------------------------

void fold_block_raw(int16_t& acc, const int8_t* w_row, const int8_t* vec,
                    int width) {
  int16_t chain = 0;
  for (int b = 0; b < width; ++b) chain = mac_step(chain, w_row[b], vec[b]);
  acc = sat16(int32_t(acc) + int32_t(chain));
}

namespace {

// Matrix part of one gate: per row, fold all blocks of `w` (row-major,
// padded_cols wide) against `vec` in ascending block order.
void fold_matrix(std::vector<int16_t>& acc, const std::vector<int8_t>& w,
                 std::span<const int8_t> vec, int rows, int padded_cols,
                 int block) {
  const int n_blocks = padded_cols / block;
  for (int r = 0; r < rows; ++r) {
    const int8_t* w_row = w.data() + size_t(r) * padded_cols;
    for (int b = 0; b < n_blocks; ++b)
      fold_block_raw(acc[r], w_row + b * block, vec.data() + b * block, block);
  }
}

}  // namespace

QuantStepResult lstm_step_quant(const QuantizedLayer& layer,
                                std::span<const int8_t> x,
                                const QuantState& state, const ActLuts& luts,
                                BlockOrder order) {
  layer.validate();
  if (order != BlockOrder::canonical)
    throw FormatError("lstm_step_quant: unknown block order");
  if (int(x.size()) != layer.n_x_pad)
    throw DimensionError(
        "lstm_step_quant: x must be padded to n_x_pad=" +
        std::to_string(layer.n_x_pad) + ", got " + std::to_string(x.size()));
  check_len(state.c.size(), size_t(layer.n_h_pad), "state.c");
  check_len(state.h.size(), size_t(layer.n_h_pad), "state.h");
  if (luts.sigmoid.in_fmt != layer.fmts.state ||
      luts.tanh.in_fmt != layer.fmts.state)
    throw FormatError("lstm_step_quant: LUT formats do not match layer");

  const int n = layer.n_h_pad;
  const FormatSet& fm = layer.fmts;
  const int bias_shift = fm.acc.frac_bits - fm.bias.frac_bits;
  const int act_shift = fm.acc.frac_bits - fm.state.frac_bits;
  // Element-wise 8x8 products carry 2*state.frac fractional bits.
  const int ew_shift = fm.state.frac_bits;

  auto gate_preact = [&](Gate g) {
    std::vector<int16_t> acc(n, 0);
    fold_matrix(acc, layer.wx[int(g)], x, n, layer.n_x_pad, layer.block);
    fold_matrix(acc, layer.wh[int(g)], state.h, n, layer.n_h_pad, layer.block);
    const auto& b = layer.bias[int(g)];
    for (int j = 0; j < n; ++j)
      acc[j] = sat16(int32_t(acc[j]) + (int32_t(b[j]) << bias_shift));
    return acc;
  };
  auto activate = [&](const std::vector<int16_t>& acc, const ActLut& lut,
                      std::vector<int8_t>& out) {
    out.resize(n);
    for (int j = 0; j < n; ++j)
      out[j] = lut.apply_raw(rescale_raw(acc[j], act_shift));
  };
  auto add_peephole = [&](std::vector<int16_t>& acc, Gate g,
                          const std::vector<int8_t>& c_vec) {
    const auto& p = layer.peephole[peephole_index(g)];
    for (int j = 0; j < n; ++j)
      acc[j] = sat16(int32_t(acc[j]) + int32_t(p[j]) * int32_t(c_vec[j]));
  };

  std::vector<int8_t> gi, gf, gc, go;

  auto acc = gate_preact(Gate::i);
  add_peephole(acc, Gate::i, state.c);
  activate(acc, luts.sigmoid, gi);

  acc = gate_preact(Gate::f);
  add_peephole(acc, Gate::f, state.c);
  activate(acc, luts.sigmoid, gf);

  acc = gate_preact(Gate::c);
  activate(acc, luts.tanh, gc);

  // c_t = f.c' + i.g, each product rescaled to state format, then an 8-bit
  // saturating add.
  QuantStepResult out;
  out.state.c.resize(n);
  for (int j = 0; j < n; ++j) {
    int8_t fc = rescale_raw(int16_t(int32_t(gf[j]) * int32_t(state.c[j])), ew_shift);
    int8_t ig = rescale_raw(int16_t(int32_t(gi[j]) * int32_t(gc[j])), ew_shift);
    out.state.c[j] = sat8(int32_t(fc) + int32_t(ig));
  }

  acc = gate_preact(Gate::o);
  add_peephole(acc, Gate::o, out.state.c);
  activate(acc, luts.sigmoid, go);

  out.state.h.resize(n);
  for (int j = 0; j < n; ++j) {
    int8_t tc = luts.tanh.apply_raw(out.state.c[j]);
    out.state.h[j] =
        rescale_raw(int16_t(int32_t(go[j]) * int32_t(tc)), ew_shift);
  }
  out.h = out.state.h;
  return out;
}

std::vector<int8_t> dense_output_quant(const QuantizedDense& dense,
                                       std::span<const int8_t> h,
                                       const ActLuts& luts) {
  if (int(h.size()) != dense.n_h_pad)
    throw DimensionError("dense_output_quant: h must be padded to " +
                         std::to_string(dense.n_h_pad));
  const int act_shift = dense.fmts.acc.frac_bits - dense.fmts.state.frac_bits;
  std::vector<int8_t> y(dense.n_y);
  for (int r = 0; r < dense.n_y; ++r) {
    int16_t acc = 0;
    const int8_t* w_row = dense.row(r);
    for (int b = 0; b < dense.n_h_blocks(); ++b)
      fold_block_raw(acc, w_row + b * dense.block, h.data() + b * dense.block,
                     dense.block);
    y[r] = luts.sigmoid.apply_raw(rescale_raw(acc, act_shift));
  }
  return y;
}

std::vector<int8_t> quantize_frame(std::span<const double> x,
                                   const FxFormat& state_fmt, int padded_len) {
  if (int(x.size()) > padded_len)
    throw DimensionError("quantize_frame: frame longer than padded length");
  std::vector<int8_t> out(padded_len, 0);
  for (size_t j = 0; j < x.size(); ++j)
    out[j] = int8_t(quantize_raw(x[j], state_fmt));
  return out;
}

QuantNetState make_zero_state(const QuantizedNetwork& net) {
  QuantNetState s;
  for (const auto& l : net.layers) s.layers.push_back(QuantState::zeros(l.n_h_pad));
  return s;
}

QuantNetStepResult network_step_quant(const QuantizedNetwork& net,
                                      std::span<const int8_t> x_padded,
                                      QuantNetState& state,
                                      const ActLuts& luts) {
  if (net.layers.empty()) throw DimensionError("network_step_quant: no layers");
  if (state.layers.size() != net.layers.size())
    throw DimensionError("network_step_quant: state/layer count mismatch");

  QuantNetStepResult out;
  std::vector<int8_t> x(x_padded.begin(), x_padded.end());
  for (size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    // A layer's input is the previous layer's padded h; pad widths match by
    // construction (n_x_pad of layer l+1 == n_h_pad of layer l).
    auto r = lstm_step_quant(layer, x, state.layers[l], luts);
    state.layers[l] = std::move(r.state);
    x = std::move(r.h);
  }
  if (net.dense) out.y = dense_output_quant(*net.dense, x, luts);
  out.h = std::move(x);
  return out;
}

}  // namespace chipmunk
