// Partitioning of an LSTM network onto an R x C tile grid (optionally S
// independent sub-arrays) and the per-frame data movement: column broadcast
// of input blocks, row-wise partial-sum reduction toward the element-wise
// column, last-column state computation, and hidden-state redistribution.
//
// Residency levels:
//   full      - the layer's weights stay loaded (one layer per sub-array);
//               loading happens once, at initialization.
//   per_layer - the sub-array is reconfigured once per layer per frame.
//   per_block - the layer does not fit the grid shape; weights stream in
//               chunk by chunk (row/column supersteps) every frame.
//
// Partial sums cross tiles at full 16-bit precision and are folded with
// saturating adds in canonical block order, so an array of any admissible
// shape is bit-identical to the monolithic golden model.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chipmunk/tile.hpp"

namespace chipmunk {

struct ArrayGeometry {
  int rows = 1;
  int cols = 1;
  int sub_arrays = 1;
  int n_lstm = 96;

  int tile_count() const { return rows * cols * sub_arrays; }
  void validate() const;

  // "RxC" or "RxCxS", e.g. "5x5x3".
  static ArrayGeometry parse(const std::string& text);
  std::string to_string() const;
};

enum class Residency : uint8_t { full, per_layer, per_block };

const char* residency_name(Residency r);

struct LayerMapping {
  int layer = 0;
  int sub_array = 0;
  Residency residency = Residency::full;
  int n_x_pad = 0, n_h_pad = 0;
  int n_rb = 0, n_xb = 0, n_hb = 0;  // block counts
  int row_supersteps = 1;
  int col_supersteps_x = 1, col_supersteps_h = 1;
  int ew_col = 0;  // grid column that performs the element-wise stages
};

struct DenseMapping {
  int sub_array = 0;
  bool resident = false;  // false: reloaded every frame (flagged in reports)
  int n_y = 0;
  int n_hb = 0;
};

struct ArrayMapping {
  ArrayGeometry geom;
  int block = 96;
  std::vector<LayerMapping> layers;
  std::optional<DenseMapping> dense;

  bool fully_resident() const;
  const LayerMapping& layer(int l) const { return layers.at(size_t(l)); }
};

// Pads dims up to block multiples, assigns layers to sub-arrays (contiguous,
// balanced) and picks each layer's residency. Never fails on a too-small
// grid: it falls back to a reconfiguration plan instead.
ArrayMapping partition(const NetworkModel& model, const ArrayGeometry& geom);

// --- schedule ---------------------------------------------------------------

enum class PhaseKind : uint8_t {
  load,
  x_broadcast,
  gate_block_compute,
  row_reduce,
  elementwise,
  h_redistribute,
  dense_output,
};

const char* phase_kind_name(PhaseKind k);

// What a load phase streams into the tiles.
enum class LoadContent : uint8_t { layer_context, x_chunk, h_chunk, dense };

// What an x_broadcast phase delivers into the register banks.
enum class BroadcastTarget : uint8_t { x_input, h_state, c_state };

struct SchedulePhase {
  PhaseKind kind = PhaseKind::load;
  int layer = -1;  // -1 for dense phases
  int sub_array = 0;
  int row_superstep = 0;
  int col_superstep = 0;

  // load
  LoadContent content = LoadContent::layer_context;
  uint64_t bytes_max = 0;    // max per-tile stream (parallel loading)
  uint64_t bytes_total = 0;  // sum over streams (serial loading)
  int n_streams = 0;

  // broadcast / compute / reduce / elementwise
  BroadcastTarget target = BroadcastTarget::x_input;
  Gate gate = Gate::i;
  BlockKind block_kind = BlockKind::x;
  int n_elements = 0;  // elements per lane (broadcast/reduce/redistribute)
  int hops = 0;        // inter-tile link crossings (reduce)
  int n_stages = 1;    // elementwise
  int n_blocks = 0;    // dense compute blocks

  bool commit_state = false;  // final h_redistribute of a layer
};

struct Schedule {
  ArrayMapping mapping;
  std::vector<SchedulePhase> init;   // initial configuration (not timed per frame)
  std::vector<SchedulePhase> frame;  // repeated every frame
};

// Deterministic phase sequence consumed by both the functional executor and
// the cycle model.
Schedule build_schedule(const ArrayMapping& mapping);

std::string schedule_to_json(const Schedule& s);

// --- functional executor -------------------------------------------------------

struct StepOutput {
  std::vector<int8_t> h;  // last layer, padded
  std::vector<int8_t> y;  // dense rows, empty when no dense layer
};

// Executes the schedule on a grid of Tile models. Bit-exact equal to
// lstm_step_quant / dense_output_quant under the canonical block order.
class ArrayRunner {
 public:
  // threads <= 0 reads CHIPMUNK_SIM_THREADS (default 1). Thread count never
  // affects results, only wall-clock time.
  ArrayRunner(const QuantizedNetwork& net, const ArrayMapping& mapping,
              int threads = 0);

  const Schedule& schedule() const { return schedule_; }
  const QuantizedNetwork& network() const { return *net_; }

  // Frame input quantized+padded by the caller / from real values.
  StepOutput step_quantized(std::span<const int8_t> x_padded);
  StepOutput step(std::span<const double> x_frame);

  void reset();

  // Recurrent state mirrors (padded), for verification.
  const QuantState& layer_state(int l) const { return states_.at(size_t(l)); }

 private:
  struct TileRef {
    Tile tile;
    bool loaded_any = false;
  };

  Tile& tile_at(int sa, int r, int c);
  void execute_phase(const SchedulePhase& ph);
  void run_load(const SchedulePhase& ph);
  void run_broadcast(const SchedulePhase& ph);
  void run_compute(const SchedulePhase& ph);
  void run_elementwise(const SchedulePhase& ph);
  void run_redistribute(const SchedulePhase& ph);
  void run_dense(const SchedulePhase& ph);
  void begin_row_superstep(const SchedulePhase& ph);
  void for_tiles(const std::vector<int>& flat_ids,
                 const std::function<void(int)>& fn);

  const QuantizedNetwork* net_;
  ArrayMapping mapping_;
  Schedule schedule_;
  ActLuts luts_;
  int threads_ = 1;

  std::vector<TileRef> tiles_;  // [sa][r][c] flattened
  std::vector<QuantState> states_;          // per layer, padded (previous frame)
  std::vector<QuantState> next_states_;     // staging for the current frame
  std::vector<std::vector<int16_t>> reduce_acc_;  // [grid row][gate]
  std::vector<int8_t> frame_x_;             // current frame input, padded
  std::vector<int8_t> dense_y_;
  int cur_layer_ = -1;
  int cur_row_ss_ = -1;
};

int threads_from_env();

}  // namespace chipmunk
