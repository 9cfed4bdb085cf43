#include "chipmunk/systolic.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace chipmunk {

using nlohmann::json;

// --- geometry ------------------------------------------------------------------

void ArrayGeometry::validate() const {
  if (rows < 1 || cols < 1 || sub_arrays < 1)
    throw DimensionError("ArrayGeometry: rows, cols and sub_arrays must be >= 1");
  if (n_lstm < 1) throw DimensionError("ArrayGeometry: n_lstm must be >= 1");
}

ArrayGeometry ArrayGeometry::parse(const std::string& text) {
  ArrayGeometry g;
  int fields[3] = {0, 0, 1};
  int n = 0;
  size_t pos = 0;
  while (pos < text.size() && n < 3) {
    size_t next = text.find('x', pos);
    std::string tok = text.substr(pos, next == std::string::npos ? next : next - pos);
    try {
      fields[n++] = std::stoi(tok);
    } catch (const std::logic_error&) {
      throw ParseError("bad geometry '" + text + "', expected RxC or RxCxS");
    }
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  if (n < 2) throw ParseError("bad geometry '" + text + "', expected RxC or RxCxS");
  g.rows = fields[0];
  g.cols = fields[1];
  g.sub_arrays = fields[2];
  g.validate();
  return g;
}

std::string ArrayGeometry::to_string() const {
  std::string s = std::to_string(rows) + "x" + std::to_string(cols);
  if (sub_arrays != 1) s += "x" + std::to_string(sub_arrays);
  return s;
}

const char* residency_name(Residency r) {
  switch (r) {
    case Residency::full: return "full";
    case Residency::per_layer: return "per_layer";
    case Residency::per_block: return "per_block";
  }
  return "?";
}

const char* phase_kind_name(PhaseKind k) {
  switch (k) {
    case PhaseKind::load: return "load";
    case PhaseKind::x_broadcast: return "x_broadcast";
    case PhaseKind::gate_block_compute: return "gate_block_compute";
    case PhaseKind::row_reduce: return "row_reduce";
    case PhaseKind::elementwise: return "elementwise";
    case PhaseKind::h_redistribute: return "h_redistribute";
    case PhaseKind::dense_output: return "dense_output";
  }
  return "?";
}

bool ArrayMapping::fully_resident() const {
  for (const auto& lm : layers)
    if (lm.residency != Residency::full) return false;
  if (dense && !dense->resident) return false;
  return true;
}

namespace {
int ceil_div(int a, int b) { return (a + b - 1) / b; }
}  // namespace

ArrayMapping partition(const NetworkModel& model, const ArrayGeometry& geom) {
  geom.validate();
  model.validate();
  const int B = geom.n_lstm;
  const int L = int(model.layers.size());
  const int S = geom.sub_arrays;

  // Contiguous balanced layer->sub-array assignment.
  std::vector<int> sub_of(L), count_in(S, 0);
  {
    int base = L / S, rem = L % S, l = 0;
    for (int s = 0; s < S && l < L; ++s) {
      int take = base + (s < rem ? 1 : 0);
      for (int k = 0; k < take; ++k) sub_of[l++] = s;
    }
    // More sub-arrays than layers: one layer each, the rest idle.
    if (base == 0)
      for (int i = 0; i < L; ++i) sub_of[i] = i;
    for (int i = 0; i < L; ++i) count_in[sub_of[i]]++;
  }

  ArrayMapping m;
  m.geom = geom;
  m.block = B;
  for (int l = 0; l < L; ++l) {
    const auto& p = model.layers[l];
    LayerMapping lm;
    lm.layer = l;
    lm.sub_array = sub_of[l];
    lm.n_x_pad = ceil_div(p.n_x, B) * B;
    lm.n_h_pad = ceil_div(p.n_h, B) * B;
    lm.n_xb = lm.n_x_pad / B;
    lm.n_hb = lm.n_h_pad / B;
    lm.n_rb = lm.n_hb;
    const bool fits = lm.n_rb <= geom.rows &&
                      std::max(lm.n_xb, lm.n_hb) <= geom.cols;
    if (fits && count_in[lm.sub_array] == 1)
      lm.residency = Residency::full;
    else if (fits)
      lm.residency = Residency::per_layer;
    else
      lm.residency = Residency::per_block;  // reconfiguration plan
    if (lm.residency == Residency::per_block) {
      lm.row_supersteps = ceil_div(lm.n_rb, geom.rows);
      lm.col_supersteps_x = ceil_div(lm.n_xb, geom.cols);
      lm.col_supersteps_h = ceil_div(lm.n_hb, geom.cols);
      lm.ew_col = (lm.n_hb - 1) % geom.cols;
    } else {
      lm.row_supersteps = 1;
      lm.col_supersteps_x = 1;
      lm.col_supersteps_h = 1;
      lm.ew_col = std::max(lm.n_xb, lm.n_hb) - 1;
    }
    m.layers.push_back(lm);
  }

  if (model.dense) {
    DenseMapping d;
    const auto& last = m.layers.back();
    d.sub_array = last.sub_array;
    d.n_y = model.dense->n_y();
    d.n_hb = last.n_hb;
    // Dense weights stay resident only when they fit next to the last
    // layer's context in the element-wise column tiles.
    const size_t ctx = stream_size_bytes(B, B, B, true) - kStreamHeaderBytes;
    const size_t dense_chunk = size_t(d.n_y) * B;
    d.resident = last.residency == Residency::full && d.n_y <= B &&
                 ctx + dense_chunk <= TileConfig{}.sram_bytes;
    m.dense = d;
  }
  return m;
}

// --- schedule builder -------------------------------------------------------------

namespace {

struct TileStreamSel {
  int sa = 0, r = 0, c = 0;  // grid coordinates
  StreamSelect sel;
};

// Per-tile streams of one load phase. Shared by the schedule builder (byte
// counts) and the executor (content), so the two can never disagree.
std::vector<TileStreamSel> load_phase_streams(const ArrayMapping& m,
                                              const SchedulePhase& ph) {
  std::vector<TileStreamSel> out;
  if (ph.content == LoadContent::dense) return out;
  const auto& lm = m.layer(ph.layer);
  const int R = m.geom.rows, C = m.geom.cols;

  if (ph.content == LoadContent::layer_context) {
    const int c_occ = std::max(lm.n_xb, lm.n_hb);
    for (int r = 0; r < std::min(lm.n_rb, R); ++r)
      for (int c = 0; c < c_occ; ++c) {
        TileStreamSel t{lm.sub_array, r, c, {}};
        t.sel.row_block = r;
        t.sel.n_row_blocks = 1;
        if (c < lm.n_xb) {
          t.sel.x_block = c;
          t.sel.n_x_blocks = 1;
        }
        if (c < lm.n_hb) {
          t.sel.h_block = c;
          t.sel.n_h_blocks = 1;
        }
        t.sel.include_bias = (c == lm.ew_col);
        out.push_back(t);
      }
    return out;
  }

  const bool is_x = ph.content == LoadContent::x_chunk;
  const int n_cb = is_x ? lm.n_xb : lm.n_hb;
  for (int r = 0; r < R; ++r) {
    const int rb = ph.row_superstep * R + r;
    if (rb >= lm.n_rb) break;
    for (int c = 0; c < C; ++c) {
      const int cb = ph.col_superstep * C + c;
      if (cb >= n_cb) break;
      TileStreamSel t{lm.sub_array, r, c, {}};
      t.sel.row_block = rb;
      t.sel.n_row_blocks = 1;
      if (is_x) {
        t.sel.x_block = cb;
        t.sel.n_x_blocks = 1;
      } else {
        t.sel.h_block = cb;
        t.sel.n_h_blocks = 1;
        t.sel.include_bias = (cb == lm.n_hb - 1);
      }
      out.push_back(t);
    }
  }
  return out;
}

void fill_load_bytes(const ArrayMapping& m, SchedulePhase& ph) {
  if (ph.content == LoadContent::dense) {
    const auto& d = *m.dense;
    // One chunk of n_y x block bytes per occupied column, plus headers.
    const uint64_t chunk = uint64_t(d.n_y) * m.block + kStreamHeaderBytes;
    const int cols_occ = std::min(d.n_hb, m.geom.cols);
    ph.n_streams = cols_occ;
    ph.bytes_max = chunk * ceil_div(d.n_hb, std::max(1, m.geom.cols));
    ph.bytes_total = chunk * d.n_hb;
    return;
  }
  auto streams = load_phase_streams(m, ph);
  ph.n_streams = int(streams.size());
  ph.bytes_max = 0;
  ph.bytes_total = 0;
  for (const auto& t : streams) {
    const uint64_t bytes = stream_size_bytes(
        t.sel.n_row_blocks * m.block, t.sel.n_x_blocks * m.block,
        t.sel.n_h_blocks * m.block, t.sel.include_bias);
    ph.bytes_max = std::max(ph.bytes_max, bytes);
    ph.bytes_total += bytes;
  }
}

SchedulePhase make_phase(PhaseKind kind, const LayerMapping& lm) {
  SchedulePhase ph;
  ph.kind = kind;
  ph.layer = lm.layer;
  ph.sub_array = lm.sub_array;
  return ph;
}

}  // namespace

Schedule build_schedule(const ArrayMapping& mapping) {
  Schedule s;
  s.mapping = mapping;
  const int B = mapping.block;
  const int R = mapping.geom.rows, C = mapping.geom.cols;

  auto emit_gates_resident = [&](const LayerMapping& lm,
                                 std::vector<SchedulePhase>& out) {
    const int c_occ = std::max(lm.n_xb, lm.n_hb);
    for (Gate g : kGateOrder) {
      for (BlockKind k : {BlockKind::x, BlockKind::h}) {
        auto ph = make_phase(PhaseKind::gate_block_compute, lm);
        ph.gate = g;
        ph.block_kind = k;
        ph.n_elements = B;
        out.push_back(ph);
      }
      if (c_occ > 1) {
        // One traversal per gate: the x-partial stream overlaps the h block
        // compute, so a single full row crossing is exposed.
        auto ph = make_phase(PhaseKind::row_reduce, lm);
        ph.gate = g;
        ph.n_elements = B;
        ph.hops = c_occ - 1;
        out.push_back(ph);
      }
    }
  };

  auto emit_tail = [&](const LayerMapping& lm, int row_ss, int rows_moved,
                       bool commit, std::vector<SchedulePhase>& out) {
    for (Gate g : kGateOrder) {
      auto ph = make_phase(PhaseKind::elementwise, lm);
      ph.gate = g;
      ph.row_superstep = row_ss;
      ph.n_stages = 1;
      out.push_back(ph);
    }
    auto ph = make_phase(PhaseKind::h_redistribute, lm);
    ph.row_superstep = row_ss;
    ph.n_elements = rows_moved * B;
    ph.commit_state = commit;
    out.push_back(ph);
  };

  auto broadcast = [&](const LayerMapping& lm, BroadcastTarget t, int row_ss,
                       int col_ss) {
    auto ph = make_phase(PhaseKind::x_broadcast, lm);
    ph.target = t;
    ph.row_superstep = row_ss;
    ph.col_superstep = col_ss;
    ph.n_elements = B;
    return ph;
  };

  for (const auto& lm : mapping.layers) {
    if (lm.residency == Residency::full) {
      auto ph = make_phase(PhaseKind::load, lm);
      ph.content = LoadContent::layer_context;
      fill_load_bytes(mapping, ph);
      s.init.push_back(ph);

      s.frame.push_back(broadcast(lm, BroadcastTarget::x_input, 0, 0));
      emit_gates_resident(lm, s.frame);
      emit_tail(lm, 0, lm.n_rb, true, s.frame);
      continue;
    }
    if (lm.residency == Residency::per_layer) {
      auto ph = make_phase(PhaseKind::load, lm);
      ph.content = LoadContent::layer_context;
      fill_load_bytes(mapping, ph);
      s.frame.push_back(ph);

      s.frame.push_back(broadcast(lm, BroadcastTarget::x_input, 0, 0));
      s.frame.push_back(broadcast(lm, BroadcastTarget::h_state, 0, 0));
      s.frame.push_back(broadcast(lm, BroadcastTarget::c_state, 0, 0));
      emit_gates_resident(lm, s.frame);
      emit_tail(lm, 0, lm.n_rb, true, s.frame);
      continue;
    }

    // per_block: stream the layer through the grid in supersteps. Per row
    // superstep, all x chunks are folded before any h chunk so the partial
    // order matches the canonical block order.
    for (int rs = 0; rs < lm.row_supersteps; ++rs) {
      const int rows_here = std::min(R, lm.n_rb - rs * R);
      for (BlockKind kind : {BlockKind::x, BlockKind::h}) {
        const bool is_x = kind == BlockKind::x;
        const int n_cb = is_x ? lm.n_xb : lm.n_hb;
        const int n_ss = is_x ? lm.col_supersteps_x : lm.col_supersteps_h;
        for (int ss = 0; ss < n_ss; ++ss) {
          auto ld = make_phase(PhaseKind::load, lm);
          ld.content = is_x ? LoadContent::x_chunk : LoadContent::h_chunk;
          ld.row_superstep = rs;
          ld.col_superstep = ss;
          fill_load_bytes(mapping, ld);
          s.frame.push_back(ld);

          s.frame.push_back(broadcast(
              lm, is_x ? BroadcastTarget::x_input : BroadcastTarget::h_state,
              rs, ss));

          const int c_occ = std::min(C, n_cb - ss * C);
          for (Gate g : kGateOrder) {
            auto ph = make_phase(PhaseKind::gate_block_compute, lm);
            ph.gate = g;
            ph.block_kind = kind;
            ph.row_superstep = rs;
            ph.col_superstep = ss;
            ph.n_elements = B;
            s.frame.push_back(ph);
          }
          if (c_occ > 1) {
            for (Gate g : kGateOrder) {
              auto ph = make_phase(PhaseKind::row_reduce, lm);
              ph.gate = g;
              ph.row_superstep = rs;
              ph.col_superstep = ss;
              ph.n_elements = B;
              ph.hops = std::max(lm.ew_col, c_occ - 1 - lm.ew_col);
              s.frame.push_back(ph);
            }
          }
        }
      }
      auto cb = broadcast(lm, BroadcastTarget::c_state, rs, 0);
      s.frame.push_back(cb);
      emit_tail(lm, rs, rows_here, rs == lm.row_supersteps - 1, s.frame);
    }
  }

  if (mapping.dense) {
    const auto& d = *mapping.dense;
    SchedulePhase ld;
    ld.kind = PhaseKind::load;
    ld.layer = -1;
    ld.sub_array = d.sub_array;
    ld.content = LoadContent::dense;
    fill_load_bytes(mapping, ld);
    (d.resident ? s.init : s.frame).push_back(ld);

    SchedulePhase ph;
    ph.kind = PhaseKind::dense_output;
    ph.layer = -1;
    ph.sub_array = d.sub_array;
    ph.n_blocks = ceil_div(d.n_y, B) * d.n_hb;
    ph.n_elements = d.n_y;
    ph.hops = std::min(d.n_hb, C) - 1;
    s.frame.push_back(ph);
  }
  return s;
}

std::string schedule_to_json(const Schedule& s) {
  json doc;
  doc["geometry"] = s.mapping.geom.to_string();
  doc["block"] = s.mapping.block;
  doc["layers"] = json::array();
  for (const auto& lm : s.mapping.layers) {
    doc["layers"].push_back({{"layer", lm.layer},
                             {"sub_array", lm.sub_array},
                             {"residency", residency_name(lm.residency)},
                             {"n_x_pad", lm.n_x_pad},
                             {"n_h_pad", lm.n_h_pad},
                             {"row_supersteps", lm.row_supersteps},
                             {"ew_col", lm.ew_col}});
  }
  if (s.mapping.dense)
    doc["dense"] = {{"resident", s.mapping.dense->resident},
                    {"n_y", s.mapping.dense->n_y}};
  auto dump_phases = [](const std::vector<SchedulePhase>& phases) {
    json arr = json::array();
    for (const auto& ph : phases) {
      json j{{"kind", phase_kind_name(ph.kind)}, {"layer", ph.layer}};
      if (ph.kind == PhaseKind::load) {
        j["bytes_max"] = ph.bytes_max;
        j["bytes_total"] = ph.bytes_total;
        j["n_streams"] = ph.n_streams;
      }
      if (ph.kind == PhaseKind::gate_block_compute) {
        j["gate"] = gate_name(ph.gate);
        j["block_kind"] = ph.block_kind == BlockKind::x ? "x" : "h";
      }
      if (ph.kind == PhaseKind::row_reduce) {
        j["gate"] = gate_name(ph.gate);
        j["hops"] = ph.hops;
      }
      arr.push_back(std::move(j));
    }
    return arr;
  };
  doc["init_phases"] = dump_phases(s.init);
  doc["frame_phases"] = dump_phases(s.frame);
  return doc.dump(2);
}

// --- executor -----------------------------------------------------------------------

int threads_from_env() {
  const char* env = std::getenv("CHIPMUNK_SIM_THREADS");
  if (!env) return 1;
  int v = std::atoi(env);
  return v < 1 ? 1 : v;
}

ArrayRunner::ArrayRunner(const QuantizedNetwork& net,
                         const ArrayMapping& mapping, int threads)
    : net_(&net),
      mapping_(mapping),
      schedule_(build_schedule(mapping)),
      luts_(ActLuts::for_formats(net.fmts)),
      threads_(threads > 0 ? threads : threads_from_env()) {
  if (net.block != mapping.geom.n_lstm)
    throw DimensionError("ArrayRunner: network block size != tile n_lstm");
  if (net.layers.size() != mapping.layers.size())
    throw DimensionError("ArrayRunner: mapping layer count mismatch");
  for (size_t l = 0; l < net.layers.size(); ++l) {
    if (net.layers[l].n_x_pad != mapping.layers[l].n_x_pad ||
        net.layers[l].n_h_pad != mapping.layers[l].n_h_pad)
      throw DimensionError("ArrayRunner: mapping dims do not match network");
  }
  if (mapping.dense && !net.dense)
    throw DimensionError("ArrayRunner: mapping has dense layer, network does not");

  TileConfig tc;
  tc.n_lstm = mapping.geom.n_lstm;
  tc.fmts = net.fmts;
  tiles_.reserve(size_t(mapping.geom.tile_count()));
  for (int i = 0; i < mapping.geom.tile_count(); ++i)
    tiles_.push_back(TileRef{Tile(tc), false});

  for (const auto& l : net.layers)
    states_.push_back(QuantState::zeros(l.n_h_pad));
  next_states_ = states_;
  reduce_acc_.assign(size_t(mapping.geom.rows) * 4,
                     std::vector<int16_t>(size_t(tc.n_lstm), 0));

  for (const auto& ph : schedule_.init) execute_phase(ph);
}

Tile& ArrayRunner::tile_at(int sa, int r, int c) {
  const int R = mapping_.geom.rows, C = mapping_.geom.cols;
  return tiles_[size_t(sa) * R * C + size_t(r) * C + c].tile;
}

void ArrayRunner::for_tiles(const std::vector<int>& flat_ids,
                            const std::function<void(int)>& fn) {
  if (threads_ <= 1 || flat_ids.size() < 2) {
    for (int id : flat_ids) fn(id);
    return;
  }
  const int n_threads = std::min<int>(threads_, int(flat_ids.size()));
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(size_t(n_threads));
  for (int t = 0; t < n_threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (size_t i = t; i < flat_ids.size(); i += size_t(n_threads))
          fn(flat_ids[i]);
      } catch (...) {
        errors[size_t(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void ArrayRunner::begin_row_superstep(const SchedulePhase& ph) {
  if (ph.layer < 0) return;
  if (ph.layer == cur_layer_ && ph.row_superstep == cur_row_ss_) return;
  cur_layer_ = ph.layer;
  cur_row_ss_ = ph.row_superstep;
  const int sa = ph.sub_array;
  const int R = mapping_.geom.rows, C = mapping_.geom.cols;
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c) tile_at(sa, r, c).begin_step();
  for (auto& acc : reduce_acc_) std::fill(acc.begin(), acc.end(), int16_t(0));
}

void ArrayRunner::run_load(const SchedulePhase& ph) {
  if (ph.content == LoadContent::dense) return;  // costed, not materialized
  const auto& qlayer = net_->layers[size_t(ph.layer)];
  auto streams = load_phase_streams(mapping_, ph);
  std::vector<int> ids(streams.size());
  for (size_t i = 0; i < streams.size(); ++i) ids[i] = int(i);
  for_tiles(ids, [&](int i) {
    const auto& t = streams[size_t(i)];
    auto bytes = write_weight_stream(qlayer, t.sel);
    tile_at(t.sa, t.r, t.c).load_weights(bytes);
  });
}

namespace {
std::span<const int8_t> block_of(const std::vector<int8_t>& v, int block,
                                 int index) {
  return std::span<const int8_t>(v.data() + size_t(index) * block,
                                 size_t(block));
}
}  // namespace

void ArrayRunner::run_broadcast(const SchedulePhase& ph) {
  const auto& lm = mapping_.layer(ph.layer);
  const int R = mapping_.geom.rows, C = mapping_.geom.cols;
  const int B = mapping_.block;
  const bool resident = lm.residency != Residency::per_block;

  if (ph.target == BroadcastTarget::c_state) {
    for (int r = 0; r < R; ++r) {
      const int rb = ph.row_superstep * R + r;
      if (rb >= lm.n_rb) break;
      tile_at(lm.sub_array, r, lm.ew_col)
          .write_c(block_of(states_[size_t(ph.layer)].c, B, rb));
    }
    return;
  }

  const bool is_x = ph.target == BroadcastTarget::x_input;
  const std::vector<int8_t>& src =
      is_x ? (ph.layer == 0 ? frame_x_ : states_[size_t(ph.layer) - 1].h)
           : states_[size_t(ph.layer)].h;
  const int n_cb = is_x ? lm.n_xb : lm.n_hb;
  const int rows_occ =
      resident ? std::min(lm.n_rb, R)
               : std::min(R, lm.n_rb - ph.row_superstep * R);
  for (int c = 0; c < C; ++c) {
    const int cb = ph.col_superstep * C + c;
    if (cb >= n_cb) break;
    for (int r = 0; r < rows_occ; ++r) {
      Tile& t = tile_at(lm.sub_array, r, c);
      if (is_x)
        t.write_x(block_of(src, B, cb));
      else
        t.write_h(block_of(src, B, cb));
    }
  }
}

void ArrayRunner::run_compute(const SchedulePhase& ph) {
  const auto& lm = mapping_.layer(ph.layer);
  const int R = mapping_.geom.rows, C = mapping_.geom.cols;
  const bool is_x = ph.block_kind == BlockKind::x;
  const int n_cb = is_x ? lm.n_xb : lm.n_hb;
  const bool resident = lm.residency != Residency::per_block;
  const int rows_occ = resident
                           ? std::min(lm.n_rb, R)
                           : std::min(R, lm.n_rb - ph.row_superstep * R);
  const int cols_occ = std::min(C, n_cb - ph.col_superstep * C);
  if (cols_occ <= 0 || rows_occ <= 0) return;

  std::vector<int> ids;
  for (int r = 0; r < rows_occ; ++r)
    for (int c = 0; c < cols_occ; ++c) ids.push_back(r * C + c);
  const int sa = lm.sub_array;
  for_tiles(ids, [&](int id) {
    tile_at(sa, id / C, id % C).run_gate_block(ph.gate, ph.block_kind);
  });

  // Harvest the per-tile block partials into the row reduction accumulator,
  // ascending column order (= ascending global block index).
  const int n = mapping_.block;
  for (int r = 0; r < rows_occ; ++r) {
    auto& red = reduce_acc_[size_t(r) * 4 + size_t(ph.gate)];
    for (int c = 0; c < cols_occ; ++c) {
      Tile& t = tile_at(sa, r, c);
      auto part = t.acc(ph.gate);
      for (int u = 0; u < n; ++u)
        red[size_t(u)] = sat16(int32_t(red[size_t(u)]) + int32_t(part[u]));
      t.clear_acc(ph.gate);
    }
  }
}

void ArrayRunner::run_elementwise(const SchedulePhase& ph) {
  const auto& lm = mapping_.layer(ph.layer);
  const int R = mapping_.geom.rows;
  const bool resident = lm.residency != Residency::per_block;
  const int rows_occ = resident
                           ? std::min(lm.n_rb, R)
                           : std::min(R, lm.n_rb - ph.row_superstep * R);
  for (int r = 0; r < rows_occ; ++r)
    tile_at(lm.sub_array, r, lm.ew_col)
        .elementwise_stage(ph.gate, reduce_acc_[size_t(r) * 4 + size_t(ph.gate)]);
}

void ArrayRunner::run_redistribute(const SchedulePhase& ph) {
  const auto& lm = mapping_.layer(ph.layer);
  const int R = mapping_.geom.rows, C = mapping_.geom.cols;
  const int B = mapping_.block;
  auto& next = next_states_[size_t(ph.layer)];
  const bool resident = lm.residency != Residency::per_block;
  const int rows_occ = resident
                           ? std::min(lm.n_rb, R)
                           : std::min(R, lm.n_rb - ph.row_superstep * R);
  for (int r = 0; r < rows_occ; ++r) {
    const int rb = ph.row_superstep * R + r;
    Tile& t = tile_at(lm.sub_array, r, lm.ew_col);
    auto h = t.h_out();
    auto c = t.c_regs();
    std::copy(h.begin(), h.end(), next.h.begin() + size_t(rb) * B);
    std::copy(c.begin(), c.end(), next.c.begin() + size_t(rb) * B);
  }
  if (ph.commit_state) {
    states_[size_t(ph.layer)] = next;
    // Fully resident layers keep the recurrent h in the register banks for
    // the next frame (no per-frame h restore phase exists for them).
    if (lm.residency == Residency::full) {
      for (int c = 0; c < std::min(lm.n_hb, C); ++c)
        for (int r = 0; r < std::min(lm.n_rb, R); ++r)
          tile_at(lm.sub_array, r, c)
              .write_h(block_of(states_[size_t(ph.layer)].h, B, c));
    }
  }
}

void ArrayRunner::run_dense(const SchedulePhase&) {
  dense_y_ = dense_output_quant(*net_->dense, states_.back().h, luts_);
}

void ArrayRunner::execute_phase(const SchedulePhase& ph) {
  begin_row_superstep(ph);
  switch (ph.kind) {
    case PhaseKind::load: run_load(ph); break;
    case PhaseKind::x_broadcast: run_broadcast(ph); break;
    case PhaseKind::gate_block_compute: run_compute(ph); break;
    case PhaseKind::row_reduce: break;  // transfer cost only
    case PhaseKind::elementwise: run_elementwise(ph); break;
    case PhaseKind::h_redistribute: run_redistribute(ph); break;
    case PhaseKind::dense_output: run_dense(ph); break;
  }
}

StepOutput ArrayRunner::step_quantized(std::span<const int8_t> x_padded) {
  const int want = net_->layers.front().n_x_pad;
  if (int(x_padded.size()) != want)
    throw DimensionError("ArrayRunner::step: x must be padded to " +
                         std::to_string(want));
  frame_x_.assign(x_padded.begin(), x_padded.end());
  dense_y_.clear();
  cur_layer_ = -1;
  cur_row_ss_ = -1;
  for (const auto& ph : schedule_.frame) execute_phase(ph);
  StepOutput out;
  out.h = states_.back().h;
  out.y = dense_y_;
  return out;
}

StepOutput ArrayRunner::step(std::span<const double> x_frame) {
  auto xq = quantize_frame(x_frame, net_->fmts.state,
                           net_->layers.front().n_x_pad);
  return step_quantized(xq);
}

void ArrayRunner::reset() {
  for (auto& t : tiles_) t.tile.reset_state();
  for (auto& s : states_) {
    std::fill(s.c.begin(), s.c.end(), int8_t(0));
    std::fill(s.h.begin(), s.h.end(), int8_t(0));
  }
  next_states_ = states_;
  for (auto& acc : reduce_acc_) std::fill(acc.begin(), acc.end(), int16_t(0));
  cur_layer_ = -1;
  cur_row_ss_ = -1;
}

}  // namespace chipmunk
