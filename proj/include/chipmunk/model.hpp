// Float-weight network description: LSTM layer parameters, optional dense
// output layer, multi-layer topology. These are the reference weights that
// get quantized before hitting the tile model.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chipmunk/common.hpp"

namespace chipmunk {

// Minimal row-major double matrix.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), data(size_t(r) * size_t(c), 0.0) {}

  double& operator()(int r, int c) { return data[size_t(r) * cols + c]; }
  double operator()(int r, int c) const { return data[size_t(r) * cols + c]; }
};

// Weights for one LSTM layer. Peepholes are diagonal by construction and so
// stored as vectors applied element-wise.
struct LstmLayerParams {
  int n_x = 0;
  int n_h = 0;
  Mat w_xi, w_xf, w_xc, w_xo;  // n_h x n_x
  Mat w_hi, w_hf, w_hc, w_ho;  // n_h x n_h
  std::vector<double> w_ci, w_cf, w_co;  // n_h
  std::vector<double> b_i, b_f, b_c, b_o;  // n_h

  void validate() const;
};

struct DenseParams {
  Mat w_hy;  // n_y x n_h

  int n_y() const { return w_hy.rows; }
  int n_h() const { return w_hy.cols; }
};

struct NetworkModel {
  std::string name;
  std::vector<LstmLayerParams> layers;
  std::optional<DenseParams> dense;

  // Checks per-layer shapes and the dimension chain (layer i's n_h feeds
  // layer i+1's n_x; dense consumes the last layer's n_h).
  void validate() const;
};

// Recurrent state of one layer, double precision.
struct LstmStateF {
  std::vector<double> c;
  std::vector<double> h;

  static LstmStateF zeros(int n_h) {
    return LstmStateF{std::vector<double>(n_h, 0.0),
                      std::vector<double>(n_h, 0.0)};
  }
};

// --- seeded generators -------------------------------------------------------
//
// Deterministic across platforms: values are derived from raw mt19937_64
// output, not from std::uniform_real_distribution.

// topology = {n_x, n_h1, n_h2, ...}; weights/biases/peepholes uniform in
// [lo, hi]. dense_n_y <= 0 means no dense layer.
NetworkModel make_random_network(const std::string& name,
                                 const std::vector<int>& topology,
                                 uint64_t seed, double lo = -1.0,
                                 double hi = 1.0, int dense_n_y = 0);

// n_frames rows of n_x values, uniform in [lo, hi].
std::vector<std::vector<double>> make_random_frames(int n_frames, int n_x,
                                                    uint64_t seed,
                                                    double lo = -1.0,
                                                    double hi = 1.0);

// The speech-recognition topology evaluated in the reports: 3 LSTM layers of
// 421 hidden units over 123 input coefficients.
NetworkModel make_ctc_3l_421h_uni(uint64_t seed);

}  // namespace chipmunk
