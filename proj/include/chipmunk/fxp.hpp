// Fixed-point formats, saturating multiply-accumulate, round-half-even
// rescaling and lookup-table activations.
//
// All values are signed two's complement. 8-bit scalars hold states, weights
// and biases; the MAC block accumulates in 16 bits. Saturating addition is
// not associative, so every accumulation in this library is defined
// left-to-right over an explicitly fixed operand order; see lstm_ref.hpp for
// the canonical block order.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "chipmunk/common.hpp"

namespace chipmunk {

// Signed Qm.n descriptor: total_bits = 1 (sign) + m + n.
struct FxFormat {
  int total_bits = 8;  // 8 or 16
  int frac_bits = 0;

  void validate() const {
    if (total_bits != 8 && total_bits != 16)
      throw FormatError("FxFormat: total_bits must be 8 or 16");
    if (frac_bits < 0 || frac_bits >= total_bits)
      throw FormatError("FxFormat: need 0 <= frac_bits < total_bits");
  }

  int64_t raw_min() const { return -(int64_t(1) << (total_bits - 1)); }
  int64_t raw_max() const { return (int64_t(1) << (total_bits - 1)) - 1; }
  double scale() const { return double(int64_t(1) << frac_bits); }
  double real_min() const { return double(raw_min()) / scale(); }
  double real_max() const { return double(raw_max()) / scale(); }

  bool operator==(const FxFormat& o) const {
    return total_bits == o.total_bits && frac_bits == o.frac_bits;
  }
  bool operator!=(const FxFormat& o) const { return !(*this == o); }

  // "Q2.5" -> 1+2+5 = 8 bits, 5 fractional.
  static FxFormat parse(const std::string& text);
  std::string to_string() const;
};

inline FxFormat q_format(int int_bits, int frac_bits) {
  FxFormat f{1 + int_bits + frac_bits, frac_bits};
  f.validate();
  return f;
}

// 8-bit fixed-point scalar.
struct Fx8 {
  int8_t raw = 0;
  FxFormat fmt{8, 0};
  double value() const { return double(raw) / fmt.scale(); }
};

// 16-bit accumulator scalar.
struct Acc16 {
  int16_t raw = 0;
  FxFormat fmt{16, 0};
  double value() const { return double(raw) / fmt.scale(); }
};

// --- raw helpers (hot paths work on raw integers) ------------------------

inline int8_t sat8(int32_t v) {
  return v > 127 ? int8_t(127) : v < -128 ? int8_t(-128) : int8_t(v);
}

inline int16_t sat16(int32_t v) {
  return v > 32767 ? int16_t(32767) : v < -32768 ? int16_t(-32768) : int16_t(v);
}

// acc' = sat(acc + a*b); exact while no saturation occurs.
inline int16_t mac_step(int16_t acc, int8_t a, int8_t b) {
  return sat16(int32_t(acc) + int32_t(a) * int32_t(b));
}

// Arithmetic right shift with round-half-to-even. shift >= 0.
inline int32_t shift_round_half_even(int32_t v, int shift) {
  if (shift == 0) return v;
  int32_t fl = v >> shift;
  int32_t rem = v - (fl << shift);
  int32_t half = int32_t(1) << (shift - 1);
  if (rem > half || (rem == half && (fl & 1))) ++fl;
  return fl;
}

// Round to nearest integer, ties to even. |v| must be < 2^62.
inline int64_t round_half_even(double v) {
  double fl = std::floor(v);
  double d = v - fl;
  auto f = int64_t(fl);
  if (d > 0.5) return f + 1;
  if (d < 0.5) return f;
  return (f & 1) ? f + 1 : f;
}

// --- quantize / dequantize ------------------------------------------------

// Round-half-even quantization with saturation. NaN is rejected; +-inf and
// out-of-range values saturate. `saturated`, when given, is set accordingly.
int64_t quantize_raw(double x, const FxFormat& fmt, bool* saturated = nullptr);

inline double dequantize(int64_t raw, const FxFormat& fmt) {
  return double(raw) / fmt.scale();
}

Fx8 quantize8(double x, const FxFormat& fmt);
Acc16 quantize16(double x, const FxFormat& fmt);

// --- typed mac / rescale ----------------------------------------------------

// Requires acc.fmt.frac_bits == a.fmt.frac_bits + b.fmt.frac_bits so the raw
// product lands directly on the accumulator scale.
Acc16 mac(const Acc16& acc, const Fx8& a, const Fx8& b);

// Shift acc down to out_fmt (round-half-even) and saturate to 8 bits.
// Requires acc.fmt.frac_bits >= out_fmt.frac_bits.
Fx8 rescale(const Acc16& acc, const FxFormat& out_fmt);

inline int8_t rescale_raw(int16_t acc_raw, int shift) {
  return sat8(shift_round_half_even(acc_raw, shift));
}

// --- activation lookup tables ----------------------------------------------

enum class ActKind : uint8_t { sigmoid, tanh };

// 256-entry table indexed by the raw bit pattern of the 8-bit input.
// entries[uint8_t(r)] == quantize(f(r / 2^in_frac), out_fmt) for all signed r.
struct ActLut {
  ActKind kind = ActKind::sigmoid;
  FxFormat in_fmt{8, 0};
  FxFormat out_fmt{8, 0};
  std::array<int8_t, 256> entries{};

  int8_t apply_raw(int8_t x) const { return entries[uint8_t(x)]; }
};

ActLut build_lut(ActKind kind, const FxFormat& in_fmt, const FxFormat& out_fmt);

Fx8 lut_apply(const ActLut& lut, const Fx8& x);

// The three format classes used throughout the datapath. Defaults: states
// Q2.5, weights and biases Q1.6, accumulator 16 bit with 11 fractional bits
// (so weight*state products are exact on the accumulator scale).
struct FormatSet {
  FxFormat state = q_format(2, 5);
  FxFormat weight = q_format(1, 6);
  FxFormat bias = q_format(1, 6);
  FxFormat acc = FxFormat{16, 11};

  void validate() const;
  bool operator==(const FormatSet& o) const {
    return state == o.state && weight == o.weight && bias == o.bias &&
           acc == o.acc;
  }
};

// Sigmoid + tanh tables on the state format (LUT input is the rescaled gate
// pre-activation, LUT output is a state-format value).
struct ActLuts {
  ActLut sigmoid;
  ActLut tanh;

  static ActLuts for_formats(const FormatSet& fmts) {
    return ActLuts{build_lut(ActKind::sigmoid, fmts.state, fmts.state),
                   build_lut(ActKind::tanh, fmts.state, fmts.state)};
  }
};

}  // namespace chipmunk
