// Quantized network containers: per-gate fixed-point weight blocks padded to
// the tile width, in the canonical gate order i, f, c, o.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chipmunk/fxp.hpp"

namespace chipmunk {

enum class Gate : uint8_t { i = 0, f = 1, c = 2, o = 3 };
constexpr std::array<Gate, 4> kGateOrder{Gate::i, Gate::f, Gate::c, Gate::o};

inline const char* gate_name(Gate g) {
  switch (g) {
    case Gate::i: return "i";
    case Gate::f: return "f";
    case Gate::c: return "c";
    case Gate::o: return "o";
  }
  return "?";
}

// Peephole slot for a gate: i->0 (w_ci), f->1 (w_cf), o->2 (w_co); the cell
// candidate has none.
inline int peephole_index(Gate g) {
  switch (g) {
    case Gate::i: return 0;
    case Gate::f: return 1;
    case Gate::o: return 2;
    default: return -1;
  }
}

// One quantized LSTM layer. Matrices are row-major int8 on the padded shape;
// rows/cols beyond (n_h, n_x) are zero so padding never perturbs results.
struct QuantizedLayer {
  int n_x = 0, n_h = 0;          // real dims
  int n_x_pad = 0, n_h_pad = 0;  // padded to a multiple of `block`
  int block = 96;
  FormatSet fmts;

  std::array<std::vector<int8_t>, 4> wx;        // [gate] n_h_pad x n_x_pad
  std::array<std::vector<int8_t>, 4> wh;        // [gate] n_h_pad x n_h_pad
  std::array<std::vector<int8_t>, 4> bias;      // [gate] n_h_pad
  std::array<std::vector<int8_t>, 3> peephole;  // ci, cf, co; n_h_pad

  int n_x_blocks() const { return n_x_pad / block; }
  int n_h_blocks() const { return n_h_pad / block; }

  const int8_t* wx_row(Gate g, int row) const {
    return wx[int(g)].data() + size_t(row) * n_x_pad;
  }
  const int8_t* wh_row(Gate g, int row) const {
    return wh[int(g)].data() + size_t(row) * n_h_pad;
  }

  void validate() const;
};

// Quantized dense output layer: y = sigmoid(W_hy h). Rows kept unpadded
// (they never feed a recurrent path); columns padded like the hidden state.
struct QuantizedDense {
  int n_y = 0;
  int n_h = 0, n_h_pad = 0;
  int block = 96;
  FormatSet fmts;
  std::vector<int8_t> w_hy;  // n_y x n_h_pad row-major

  const int8_t* row(int r) const { return w_hy.data() + size_t(r) * n_h_pad; }
  int n_h_blocks() const { return n_h_pad / block; }
};

struct QuantizedNetwork {
  std::string name;
  int block = 96;
  FormatSet fmts;
  std::vector<QuantizedLayer> layers;
  std::optional<QuantizedDense> dense;
};

// Per-tensor saturation counts from quantize_model.
struct SaturationReport {
  struct Entry {
    std::string tensor;
    uint64_t count = 0;
  };
  std::vector<Entry> entries;
  uint64_t total = 0;
};

}  // namespace chipmunk
