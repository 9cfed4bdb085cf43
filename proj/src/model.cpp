#include "chipmunk/model.hpp"

#include <random>

namespace chipmunk {

namespace {

void check_mat(const Mat& m, int rows, int cols, const char* what) {
  if (m.rows != rows || m.cols != cols ||
      m.data.size() != size_t(rows) * size_t(cols))
    throw DimensionError(std::string(what) + ": expected " +
                         std::to_string(rows) + "x" + std::to_string(cols) +
                         ", got " + std::to_string(m.rows) + "x" +
                         std::to_string(m.cols));
}

void check_vec(const std::vector<double>& v, int n, const char* what) {
  if (int(v.size()) != n)
    throw DimensionError(std::string(what) + ": expected length " +
                         std::to_string(n) + ", got " +
                         std::to_string(v.size()));
}

// Uniform value in [lo, hi) from raw engine bits (53-bit mantissa path),
// bit-identical on every platform. Rounded through float32 so the values
// survive the network file encoding exactly.
double uniform(std::mt19937_64& rng, double lo, double hi) {
  double u = double(rng() >> 11) * 0x1.0p-53;
  return double(float(lo + u * (hi - lo)));
}

void fill(Mat& m, std::mt19937_64& rng, double lo, double hi) {
  for (auto& v : m.data) v = uniform(rng, lo, hi);
}

void fill(std::vector<double>& v, std::mt19937_64& rng, double lo, double hi) {
  for (auto& x : v) x = uniform(rng, lo, hi);
}

}  // namespace

void LstmLayerParams::validate() const {
  if (n_x <= 0 || n_h <= 0)
    throw DimensionError("LstmLayerParams: n_x and n_h must be positive");
  check_mat(w_xi, n_h, n_x, "w_xi");
  check_mat(w_xf, n_h, n_x, "w_xf");
  check_mat(w_xc, n_h, n_x, "w_xc");
  check_mat(w_xo, n_h, n_x, "w_xo");
  check_mat(w_hi, n_h, n_h, "w_hi");
  check_mat(w_hf, n_h, n_h, "w_hf");
  check_mat(w_hc, n_h, n_h, "w_hc");
  check_mat(w_ho, n_h, n_h, "w_ho");
  check_vec(w_ci, n_h, "w_ci");
  check_vec(w_cf, n_h, "w_cf");
  check_vec(w_co, n_h, "w_co");
  check_vec(b_i, n_h, "b_i");
  check_vec(b_f, n_h, "b_f");
  check_vec(b_c, n_h, "b_c");
  check_vec(b_o, n_h, "b_o");
}

void NetworkModel::validate() const {
  if (layers.empty()) throw DimensionError("NetworkModel: no layers");
  for (size_t i = 0; i < layers.size(); ++i) {
    layers[i].validate();
    if (i > 0 && layers[i].n_x != layers[i - 1].n_h)
      throw DimensionError("NetworkModel: layer " + std::to_string(i) +
                           " n_x=" + std::to_string(layers[i].n_x) +
                           " does not match previous n_h=" +
                           std::to_string(layers[i - 1].n_h));
  }
  if (dense) {
    if (dense->n_y() < 1)
      throw DimensionError("NetworkModel: dense layer needs n_y >= 1");
    if (dense->n_h() != layers.back().n_h)
      throw DimensionError("NetworkModel: dense n_h=" +
                           std::to_string(dense->n_h()) +
                           " does not match last layer n_h=" +
                           std::to_string(layers.back().n_h));
  }
}

NetworkModel make_random_network(const std::string& name,
                                 const std::vector<int>& topology,
                                 uint64_t seed, double lo, double hi,
                                 int dense_n_y) {
  if (topology.size() < 2)
    throw DimensionError("make_random_network: topology needs n_x + layers");
  std::mt19937_64 rng(seed);
  NetworkModel net;
  net.name = name;
  for (size_t l = 1; l < topology.size(); ++l) {
    LstmLayerParams p;
    p.n_x = topology[l - 1];
    p.n_h = topology[l];
    p.w_xi = Mat(p.n_h, p.n_x);
    p.w_xf = Mat(p.n_h, p.n_x);
    p.w_xc = Mat(p.n_h, p.n_x);
    p.w_xo = Mat(p.n_h, p.n_x);
    p.w_hi = Mat(p.n_h, p.n_h);
    p.w_hf = Mat(p.n_h, p.n_h);
    p.w_hc = Mat(p.n_h, p.n_h);
    p.w_ho = Mat(p.n_h, p.n_h);
    for (Mat* m : {&p.w_xi, &p.w_xf, &p.w_xc, &p.w_xo, &p.w_hi, &p.w_hf,
                   &p.w_hc, &p.w_ho})
      fill(*m, rng, lo, hi);
    for (auto* v : {&p.w_ci, &p.w_cf, &p.w_co, &p.b_i, &p.b_f, &p.b_c, &p.b_o}) {
      v->resize(p.n_h);
      fill(*v, rng, lo, hi);
    }
    net.layers.push_back(std::move(p));
  }
  if (dense_n_y > 0) {
    DenseParams d;
    d.w_hy = Mat(dense_n_y, topology.back());
    fill(d.w_hy, rng, lo, hi);
    net.dense = std::move(d);
  }
  net.validate();
  return net;
}

std::vector<std::vector<double>> make_random_frames(int n_frames, int n_x,
                                                    uint64_t seed, double lo,
                                                    double hi) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::vector<double>> frames(n_frames);
  for (auto& f : frames) {
    f.resize(n_x);
    fill(f, rng, lo, hi);
  }
  return frames;
}

NetworkModel make_ctc_3l_421h_uni(uint64_t seed) {
  return make_random_network("CTC-3L-421H-UNI", {123, 421, 421, 421}, seed);
}

}  // namespace chipmunk
