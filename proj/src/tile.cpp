#include "chipmunk/tile.hpp"

#include <algorithm>

namespace chipmunk {

void TileConfig::validate() const {
  if (n_lstm <= 0) throw DimensionError("TileConfig: n_lstm must be positive");
  fmts.validate();
  if (fifo_depth < 1) throw DimensionError("TileConfig: fifo_depth must be >= 1");
  if (context_bytes() > sram_bytes)
    throw CapacityError("TileConfig: a full " + std::to_string(n_lstm) + "x" +
                        std::to_string(n_lstm) + " block set needs " +
                        std::to_string(context_bytes()) +
                        " bytes but sram_bytes is " +
                        std::to_string(sram_bytes));
}

Tile::Tile(TileConfig cfg) : cfg_(cfg), luts_(ActLuts::for_formats(cfg.fmts)) {
  cfg_.validate();
  const int n = cfg_.n_lstm;
  for (auto& a : acc_) a.assign(n, 0);
  r_i_.assign(n, 0);
  r_f_.assign(n, 0);
  r_o_.assign(n, 0);
  c_.assign(n, 0);
  x_regs_.assign(n, 0);
  h_regs_.assign(n, 0);
  h_out_.assign(n, 0);
}

const StreamHeader& Tile::stream_header() const {
  if (!loaded_) throw SequenceError("tile: weights not loaded");
  return hdr_;
}

void Tile::apply_stream(const StreamHeader& h, std::span<const uint8_t> bytes) {
  const int n = cfg_.n_lstm;
  if (h.rows != n || (h.x_cols != 0 && h.x_cols != n) ||
      (h.h_cols != 0 && h.h_cols != n))
    throw CapacityError(
        "tile: stream dims " + std::to_string(h.rows) + "x(" +
        std::to_string(h.x_cols) + "+" + std::to_string(h.h_cols) +
        ") do not fit a " + std::to_string(n) +
        "-unit tile; map the network onto a tile grid instead");
  if (h.payload_bytes() > cfg_.sram_bytes)
    throw CapacityError("tile: stream payload exceeds SRAM capacity");
  if (h.fmts != cfg_.fmts)
    throw FormatError("tile: stream formats do not match tile configuration");

  const uint8_t* p = bytes.data() + kStreamHeaderBytes;
  auto take = [&](size_t count) {
    const int8_t* src = reinterpret_cast<const int8_t*>(p);
    p += count;
    return std::vector<int8_t>(src, src + count);
  };
  for (int g = 0; g < 4; ++g) {
    wx_[g] = take(size_t(h.rows) * h.x_cols);
    wh_[g] = take(size_t(h.rows) * h.h_cols);
  }
  if (h.has_bias) {
    for (int g = 0; g < 4; ++g) bias_[g] = take(size_t(h.rows));
    for (int k = 0; k < 3; ++k) peep_[k] = take(size_t(h.rows));
  } else {
    for (auto& b : bias_) b.clear();
    for (auto& pe : peep_) pe.clear();
  }
  hdr_ = h;
  loaded_ = true;
}

uint64_t Tile::load_weights(std::span<const uint8_t> stream) {
  StreamHeader h = parse_stream_header(stream);  // validates exact length
  apply_stream(h, stream);
  return stream.size();  // one byte per cycle
}

TimedLoad Tile::load_weights_timed(std::span<const uint8_t> stream,
                                   const CyclePattern& producer_valid,
                                   const CyclePattern& consumer_ready) {
  StreamHeader h = parse_stream_header(stream);

  StreamPort port(size_t(cfg_.fifo_depth));
  std::vector<uint8_t> staging(stream.size());
  size_t sent = 0, consumed = 0;
  uint64_t cycle = 0;
  const uint64_t limit = uint64_t(stream.size()) * 1000 + 1000000;
  while (consumed < stream.size()) {
    if (sent < stream.size() && producer_valid(cycle) && port.ready())
      port.offer(stream[sent++]);
    if (consumer_ready(cycle)) {
      if (auto b = port.take()) staging[consumed++] = *b;
    }
    if (++cycle > limit)
      throw SequenceError("tile: load stalled (patterns never complete)");
  }
  apply_stream(h, staging);
  return TimedLoad{cycle, consumed};
}

std::vector<uint8_t> Tile::readback_stream() const {
  if (!loaded_) throw SequenceError("tile: weights not loaded");
  std::vector<uint8_t> out;
  out.reserve(kStreamHeaderBytes + hdr_.payload_bytes());
  out.insert(out.end(), {'C', 'H', 'M', 'K'});
  out.push_back(kStreamVersion);
  out.push_back(kGateOrderCode);
  out.push_back(uint8_t((hdr_.fmts.bias.frac_bits << 4) | (hdr_.has_bias ? 1 : 0)));
  out.push_back(uint8_t(hdr_.fmts.weight.frac_bits));
  out.push_back(uint8_t(hdr_.fmts.state.frac_bits));
  out.push_back(uint8_t(hdr_.fmts.acc.frac_bits));
  auto put_u16 = [&](int v) {
    out.push_back(uint8_t(v & 0xff));
    out.push_back(uint8_t(v >> 8));
  };
  put_u16(hdr_.rows);
  put_u16(hdr_.x_cols);
  put_u16(hdr_.h_cols);
  auto append = [&](const std::vector<int8_t>& v) {
    out.insert(out.end(), reinterpret_cast<const uint8_t*>(v.data()),
               reinterpret_cast<const uint8_t*>(v.data()) + v.size());
  };
  for (int g = 0; g < 4; ++g) {
    append(wx_[g]);
    append(wh_[g]);
  }
  if (hdr_.has_bias) {
    for (int g = 0; g < 4; ++g) append(bias_[g]);
    for (int k = 0; k < 3; ++k) append(peep_[k]);
  }
  return out;
}

namespace {
void check_width(size_t got, int n, const char* what) {
  if (got != size_t(n))
    throw DimensionError(std::string(what) + ": expected " +
                         std::to_string(n) + " elements, got " +
                         std::to_string(got));
}
}  // namespace

void Tile::write_x(std::span<const int8_t> v) {
  check_width(v.size(), cfg_.n_lstm, "write_x");
  std::copy(v.begin(), v.end(), x_regs_.begin());
}

void Tile::write_h(std::span<const int8_t> v) {
  check_width(v.size(), cfg_.n_lstm, "write_h");
  std::copy(v.begin(), v.end(), h_regs_.begin());
}

void Tile::write_c(std::span<const int8_t> v) {
  check_width(v.size(), cfg_.n_lstm, "write_c");
  std::copy(v.begin(), v.end(), c_.begin());
}

void Tile::begin_step() {
  for (auto& a : acc_) std::fill(a.begin(), a.end(), int16_t(0));
  stages_done_ = 0;
}

void Tile::fold(Gate g, BlockKind kind, std::span<const int8_t> vec) {
  if (!loaded_) throw SequenceError("tile: run_gate_block before load_weights");
  const auto& w = (kind == BlockKind::x) ? wx_[int(g)] : wh_[int(g)];
  if (w.empty())
    throw SequenceError(std::string("tile: no ") +
                        (kind == BlockKind::x ? "x" : "h") +
                        " block loaded for gate " + gate_name(g));
  const int n = cfg_.n_lstm;
  check_width(vec.size(), n, "run_gate_block vec");
  auto& acc = acc_[int(g)];
  for (int u = 0; u < n; ++u)
    fold_block_raw(acc[u], w.data() + size_t(u) * n, vec.data(), n);
}

void Tile::run_gate_block(Gate g, BlockKind kind, std::span<const int8_t> vec) {
  // Broadcast fill of the register bank, then the n_lstm MAC cycles.
  if (kind == BlockKind::x)
    write_x(vec);
  else
    write_h(vec);
  fold(g, kind, vec);
}

void Tile::run_gate_block(Gate g, BlockKind kind) {
  fold(g, kind, kind == BlockKind::x ? std::span<const int8_t>(x_regs_)
                                     : std::span<const int8_t>(h_regs_));
}

void Tile::clear_acc(Gate g) {
  std::fill(acc_[int(g)].begin(), acc_[int(g)].end(), int16_t(0));
}

std::span<const int8_t> Tile::gate_reg(Gate g) const {
  switch (g) {
    case Gate::i: return r_i_;
    case Gate::f: return r_f_;
    case Gate::o: return r_o_;
    case Gate::c: return c_;
  }
  return {};
}

void Tile::elementwise_stage(Gate g, std::span<const int16_t> acc_view) {
  if (!loaded_) throw SequenceError("tile: elementwise before load_weights");
  if (!hdr_.has_bias)
    throw SequenceError("tile: elementwise needs bias/peepholes loaded");
  const int n = cfg_.n_lstm;
  check_width(acc_view.size(), n, "elementwise acc");

  // Stage order per frame: i and f first (any order), then c, then o.
  auto done = [&](Gate x) { return (stages_done_ >> int(x)) & 1; };
  if (g == Gate::c && !(done(Gate::i) && done(Gate::f)))
    throw SequenceError("tile: c stage before i/f stages");
  if (g == Gate::o && !done(Gate::c))
    throw SequenceError("tile: o stage before c stage");

  const FormatSet& fm = cfg_.fmts;
  const int bias_shift = fm.acc.frac_bits - fm.bias.frac_bits;
  const int act_shift = fm.acc.frac_bits - fm.state.frac_bits;
  const int ew_shift = fm.state.frac_bits;
  const auto& b = bias_[int(g)];

  auto preact = [&](int u, const int8_t* peep_vec, const int8_t* c_vec) {
    int32_t a = sat16(int32_t(acc_view[u]) + (int32_t(b[u]) << bias_shift));
    if (peep_vec)
      a = sat16(a + int32_t(peep_vec[u]) * int32_t(c_vec[u]));
    return rescale_raw(int16_t(a), act_shift);
  };

  switch (g) {
    case Gate::i:
      for (int u = 0; u < n; ++u)
        r_i_[u] = luts_.sigmoid.apply_raw(preact(u, peep_[0].data(), c_.data()));
      break;
    case Gate::f:
      for (int u = 0; u < n; ++u)
        r_f_[u] = luts_.sigmoid.apply_raw(preact(u, peep_[1].data(), c_.data()));
      break;
    case Gate::c:
      for (int u = 0; u < n; ++u) {
        int8_t g_cand = luts_.tanh.apply_raw(preact(u, nullptr, nullptr));
        int8_t fc = rescale_raw(int16_t(int32_t(r_f_[u]) * int32_t(c_[u])), ew_shift);
        int8_t ig = rescale_raw(int16_t(int32_t(r_i_[u]) * int32_t(g_cand)), ew_shift);
        c_[u] = sat8(int32_t(fc) + int32_t(ig));
      }
      break;
    case Gate::o:
      for (int u = 0; u < n; ++u) {
        r_o_[u] = luts_.sigmoid.apply_raw(preact(u, peep_[2].data(), c_.data()));
        int8_t tc = luts_.tanh.apply_raw(c_[u]);
        h_out_[u] = rescale_raw(int16_t(int32_t(r_o_[u]) * int32_t(tc)), ew_shift);
      }
      break;
  }
  stages_done_ |= uint8_t(1 << int(g));
}

void Tile::elementwise_stage(Gate g) { elementwise_stage(g, acc_[int(g)]); }

std::vector<int8_t> Tile::step(std::span<const int8_t> x_padded) {
  if (!loaded_) throw SequenceError("tile: step before load_weights");
  if (hdr_.x_cols != cfg_.n_lstm || hdr_.h_cols != cfg_.n_lstm || !hdr_.has_bias)
    throw CapacityError(
        "tile: step needs a full resident block set (x, h, bias); larger "
        "networks must run on a tile grid");
  begin_step();
  write_x(x_padded);
  for (Gate g : kGateOrder) {
    run_gate_block(g, BlockKind::x);
    run_gate_block(g, BlockKind::h);
  }
  for (Gate g : kGateOrder) elementwise_stage(g);
  h_regs_ = h_out_;  // retained for the next frame
  return h_out_;
}

void Tile::reset_state() {
  for (auto& a : acc_) std::fill(a.begin(), a.end(), int16_t(0));
  auto zero = [](std::vector<int8_t>& v) {
    std::fill(v.begin(), v.end(), int8_t(0));
  };
  zero(r_i_);
  zero(r_f_);
  zero(r_o_);
  zero(c_);
  zero(x_regs_);
  zero(h_regs_);
  zero(h_out_);
  stages_done_ = 0;
}

}  // namespace chipmunk
