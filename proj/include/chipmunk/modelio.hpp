// Network file parsing (.chmk.json), float->fixed quantization, and the
// canonical binary weight layout (.chmk.bin) streamed into tiles.
//
// Weight stream layout, all integers little-endian:
//   [0..3]   magic "CHMK"
//   [4]      version 0x01
//   [5]      gate order, 2 bits per gate MSB-first: i,f,c,o -> 0x1B
//   [6]      flags: bit0 = bias+peepholes present, bits 4..7 = bias frac_bits
//   [7]      weight frac_bits
//   [8]      state frac_bits
//   [9]      accumulator frac_bits
//   [10..11] rows (u16)
//   [12..13] x_cols (u16)
//   [14..15] h_cols (u16)
// payload: per gate (i,f,c,o): rows*x_cols bytes of W_x (row-major), then
// rows*h_cols bytes of W_h; if flags bit0: biases (i,f,c,o; rows bytes each)
// then peepholes (ci,cf,co; rows bytes each). The byte count is a pure
// function of the header.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "chipmunk/model.hpp"
#include "chipmunk/quantized.hpp"

namespace chipmunk {

inline constexpr size_t kStreamHeaderBytes = 16;
inline constexpr uint8_t kStreamVersion = 0x01;
inline constexpr uint8_t kGateOrderCode = 0x1B;  // i,f,c,o

// --- network files -----------------------------------------------------------

// Parses a .chmk.json document. Throws ParseError with the offending field
// path, or DimensionError for a broken layer chain.
NetworkModel parse_network(const std::string& text);
NetworkModel parse_network_file(const std::string& path);

std::string write_network(const NetworkModel& net);
void write_network_file(const NetworkModel& net, const std::string& path);

// --- quantization ------------------------------------------------------------

struct QuantizeResult {
  QuantizedNetwork net;
  SaturationReport saturation;
};

// Quantizes every tensor (round-half-even, saturating) and zero-pads to
// block multiples. Never fails: saturation events are counted and reported.
QuantizeResult quantize_model(const NetworkModel& model, const FormatSet& fmts,
                              int block = 96);

// --- weight streams ----------------------------------------------------------

// Selects the slice of a quantized layer that one stream carries.
struct StreamSelect {
  int row_block = 0;      // first row block
  int n_row_blocks = 1;   // contiguous row blocks (rows = n_row_blocks*block)
  int x_block = 0;        // first x column block
  int n_x_blocks = 0;     // 0 = no x part
  int h_block = 0;
  int n_h_blocks = 0;
  bool include_bias = false;  // bias + peepholes for the selected rows
};

std::vector<uint8_t> write_weight_stream(const QuantizedLayer& layer,
                                         const StreamSelect& sel);

// Whole layer in one stream (rows = n_h_pad, x_cols = n_x_pad, ...).
std::vector<uint8_t> write_layer_stream(const QuantizedLayer& layer);

// Stream byte count implied by a selection (header included).
size_t stream_size_bytes(int rows, int x_cols, int h_cols, bool include_bias);
size_t stream_size_bytes(const QuantizedLayer& layer, const StreamSelect& sel);

// Parsed header of a weight stream.
struct StreamHeader {
  uint8_t version = kStreamVersion;
  uint8_t gate_order = kGateOrderCode;
  bool has_bias = false;
  FormatSet fmts;
  int rows = 0;
  int x_cols = 0;
  int h_cols = 0;

  size_t payload_bytes() const;
};

// Validates magic/version/order and the exact length. Robust against
// fuzzed headers: never reads out of bounds, throws LoadError instead.
StreamHeader parse_stream_header(std::span<const uint8_t> bytes);

// Reconstructs a QuantizedLayer from a whole-layer stream. real_n_x/n_h
// record the unpadded dims when the caller knows them (<=0 keeps padded).
QuantizedLayer read_layer_stream(std::span<const uint8_t> bytes, int block,
                                 int real_n_x = 0, int real_n_h = 0);

// --- misc ---------------------------------------------------------------------

std::string base64_encode(std::span<const uint8_t> bytes);
std::vector<uint8_t> base64_decode(const std::string& text);

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const uint8_t> bytes);

}  // namespace chipmunk
