// Cycle counting over schedules, operating-point time/power/energy
// conversion, op counting, and duty-cycled average power.
//
// Cycle cost per phase kind (parameters in CycleParams):
//   load               bytes / bytes_per_load_cycle (max per-tile stream when
//                      loading in parallel, summed when serial)
//                      + reload_event_overhead per load phase
//   gate_block_compute broadcast_cycles_per_block
//   x_broadcast        broadcast_cycles_per_block per block moved
//   row_reduce         n_elements * reduce_cycles_per_element * hops
//   elementwise        n_stages * elementwise_stage_cycles
//   h_redistribute     broadcast_cycles_per_block per block moved
//   dense_output       n_blocks * broadcast_cycles_per_block
//                      + hops * reduce_cycles_per_element * broadcast_cycles_per_block
//                      + n_y output bytes
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "chipmunk/systolic.hpp"

namespace chipmunk {

struct OperatingPoint {
  std::string name;
  double voltage_v = 0.0;
  double freq_hz = 0.0;
  // Per-tile active power used for array power figures.
  double tile_power_w = 0.0;
  // Measured single-chip power at this voltage; behind the peak-efficiency
  // identities. Differs from tile_power_w (24.45 vs 29.03 mW at 1.24 V);
  // both are surfaced in reports.
  double core_power_w = 0.0;

  void validate() const;
};

// The two characterized operating points.
OperatingPoint op_point_124();  // 168 MHz, 24.45 mW/tile, 29.03 mW core
OperatingPoint op_point_075();  // 20 MHz, 2.21 mW/tile, 1.24 mW core
std::optional<OperatingPoint> find_op_point(const std::string& name);

struct CycleParams {
  double bytes_per_load_cycle = 1.0;
  bool parallel_tile_load = true;
  int reduce_cycles_per_element = 2;
  int elementwise_stage_cycles = 4;
  uint64_t reload_event_overhead = 1000;
  int broadcast_cycles_per_block = 96;
  // Overlap reconfiguration with compute (experimental; default off).
  bool overlap_load = false;
  // Charge x/h streaming phases; off excludes I/O from execution time.
  bool include_io_streaming = true;

  // Named override for --cycle-param k=v. Throws ParseError on unknown keys.
  void set(const std::string& key, const std::string& value);
};

constexpr int kPhaseKinds = 7;

struct PhaseCycles {
  std::array<uint64_t, kPhaseKinds> by_kind{};
  uint64_t total = 0;

  uint64_t of(PhaseKind k) const { return by_kind[size_t(k)]; }
};

PhaseCycles simulate_cycles(const std::vector<SchedulePhase>& phases,
                            const CycleParams& params);

struct ScheduleCycles {
  PhaseCycles init;
  PhaseCycles frame;
};

ScheduleCycles simulate_cycles(const Schedule& schedule,
                               const CycleParams& params);

// --- op counting -----------------------------------------------------------------

struct OpCounts {
  uint64_t macs = 0;             // multiply-accumulates in matrix products
  uint64_t mac_ops = 0;          // 2 per MAC
  uint64_t elementwise_ops = 0;  // peephole/bias/activation/cell/output, 1 each
  uint64_t total_ops = 0;
  uint64_t weights = 0;  // matrix + bias + peephole (+ dense) parameters
};

// Counted on the real (unpadded) dims: useful work per frame.
OpCounts op_count(const NetworkModel& model);

// 2 ops per MAC per cycle: 2 * n_macs * freq, in Gop/s.
double peak_performance_gops(const OperatingPoint& op, int n_macs = 96);

// peak_performance / measured core power in mW.
double efficiency_gops_per_mw(const OperatingPoint& op, int n_macs = 96);

// --- reports ---------------------------------------------------------------------

struct RunReport {
  uint64_t cycles_total = 0;
  uint64_t init_cycles = 0;
  std::array<uint64_t, kPhaseKinds> cycles_by_kind{};
  double exec_time_s = 0.0;
  double frame_period_s = 0.01;
  double peak_power_w = 0.0;
  double avg_power_w = 0.0;
  double energy_per_frame_j = 0.0;
  double gops = 0.0;
  double gops_per_mw = 0.0;
  bool deadline_met = false;
  int n_tiles = 0;
  OpCounts ops;
  OperatingPoint op;
  std::string geometry;
  std::vector<std::string> residency;  // per layer
  bool dense_reloaded = false;
};

RunReport make_report(const ScheduleCycles& cycles, const Schedule& schedule,
                      const OperatingPoint& op, const OpCounts& ops,
                      double frame_period_s = 0.01);

// Structured report with fixed field names (cycles_total, exec_time_s,
// peak_power_w, avg_power_w, energy_j, gops, gops_per_mw, deadline_met, ...).
std::string report_to_json(const RunReport& report);

// Table-style one-line summary for the CLI.
std::string report_summary_line(const RunReport& report);

}  // namespace chipmunk
