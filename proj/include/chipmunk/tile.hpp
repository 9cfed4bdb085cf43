// Functional model of one accelerator engine: per-unit weight SRAM, the
// x/h register bank fed one element per cycle, 96 parallel LSTM units, the
// stream ports with ready/valid handshake, and the per-frame stage sequencer.
//
// The physical engine time-multiplexes a single 16-bit accumulator per unit
// across the four gates; this model keeps a per-gate accumulator bank so the
// gate partials stay live across the grouped compute phases a schedule
// emits. Results are identical, and the cycle model is unaffected.
#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "chipmunk/lstm_ref.hpp"
#include "chipmunk/modelio.hpp"

namespace chipmunk {

enum class BlockKind : uint8_t { x = 0, h = 1 };

struct TileConfig {
  int n_lstm = 96;
  FormatSet fmts;
  size_t sram_bytes = 81700;
  int fifo_depth = 2;

  // SRAM is organized as 12 logical banks; they matter only for capacity
  // accounting (each unit owns its slice, so there are no conflicts).
  static constexpr int kSramBanks = 12;

  // Payload bytes of a full n_lstm x n_lstm block set.
  size_t context_bytes(bool include_bias = true) const {
    return stream_size_bytes(n_lstm, n_lstm, n_lstm, include_bias) -
           kStreamHeaderBytes;
  }

  void validate() const;
};

// Bounded FIFO with ready/valid semantics. A byte transfers exactly when the
// producer offers (valid) and the FIFO has space (ready); offered bytes fall
// through to the consumer within the same cycle.
class StreamPort {
 public:
  explicit StreamPort(size_t depth = 2) : depth_(depth) {}

  bool ready() const { return fifo_.size() < depth_; }
  bool offer(uint8_t b) {
    if (!ready()) return false;
    fifo_.push_back(b);
    return true;
  }
  std::optional<uint8_t> take() {
    if (fifo_.empty()) return std::nullopt;
    uint8_t b = fifo_.front();
    fifo_.pop_front();
    return b;
  }
  size_t size() const { return fifo_.size(); }

 private:
  size_t depth_;
  std::deque<uint8_t> fifo_;
};

// Per-cycle stall pattern: cycle index -> asserted?
using CyclePattern = std::function<bool(uint64_t)>;

struct TimedLoad {
  uint64_t cycles = 0;
  uint64_t bytes = 0;
};

class Tile {
 public:
  explicit Tile(TileConfig cfg);

  const TileConfig& config() const { return cfg_; }
  bool loaded() const { return loaded_; }
  const StreamHeader& stream_header() const;

  // Loads a canonical weight stream. The stream length must be exactly the
  // byte count its header implies (LoadError with the byte position
  // otherwise); repeating a load with identical bytes is idempotent.
  // Returns the cycle count (one byte per cycle, no stalls).
  uint64_t load_weights(std::span<const uint8_t> stream);

  // Same, but driven through the input port cycle by cycle with arbitrary
  // producer valid / consumer ready patterns. Stalls change only the cycle
  // count, never the result.
  TimedLoad load_weights_timed(std::span<const uint8_t> stream,
                               const CyclePattern& producer_valid,
                               const CyclePattern& consumer_ready);

  // Re-serializes the current SRAM contents in canonical layout.
  std::vector<uint8_t> readback_stream() const;

  // Register banks. Writing models the one-element-per-cycle broadcast fill.
  void write_x(std::span<const int8_t> v);
  void write_h(std::span<const int8_t> v);
  void write_c(std::span<const int8_t> v);
  std::span<const int8_t> c_regs() const { return c_; }
  std::span<const int8_t> h_regs() const { return h_regs_; }
  std::span<const int8_t> h_out() const { return h_out_; }
  // i/f/o gate registers (Gate::c aliases the cell register).
  std::span<const int8_t> gate_reg(Gate g) const;

  // Clears accumulators and the stage sequencer for a new frame/row block.
  void begin_step();

  // Folds the loaded (gate, kind) weight block against vec: each unit u
  // advances its accumulator by the saturating chain over n_lstm broadcast
  // cycles. The accumulator is not reset, so multi-block accumulation works
  // by calling this repeatedly in canonical block order.
  void run_gate_block(Gate g, BlockKind kind, std::span<const int8_t> vec);
  // Same, using the current x/h register bank contents.
  void run_gate_block(Gate g, BlockKind kind);

  std::span<const int16_t> acc(Gate g) const { return acc_[int(g)]; }
  void clear_acc(Gate g);

  // Per-gate scalar stage: bias add, peephole add, LUT activation into the
  // gate register; the c stage also performs the cell update and the o stage
  // computes h. `acc_view` injects a reduced accumulator (grid mode);
  // the overload without it consumes the tile's own accumulator.
  void elementwise_stage(Gate g, std::span<const int16_t> acc_view);
  void elementwise_stage(Gate g);

  // Whole-network mode: one frame through all four gates. Requires a loaded
  // full block set (x and h) and keeps c/h across calls.
  std::vector<int8_t> step(std::span<const int8_t> x_padded);

  void reset_state();

 private:
  void fold(Gate g, BlockKind kind, std::span<const int8_t> vec);
  void apply_stream(const StreamHeader& h, std::span<const uint8_t> bytes);

  TileConfig cfg_;
  ActLuts luts_;

  bool loaded_ = false;
  StreamHeader hdr_;
  std::array<std::vector<int8_t>, 4> wx_, wh_;
  std::array<std::vector<int8_t>, 4> bias_;
  std::array<std::vector<int8_t>, 3> peep_;

  std::array<std::vector<int16_t>, 4> acc_;
  std::vector<int8_t> r_i_, r_f_, r_o_, c_;
  std::vector<int8_t> x_regs_, h_regs_, h_out_;
  uint8_t stages_done_ = 0;  // bit per gate, reset by begin_step()
};

}  // namespace chipmunk
