#include "chipmunk/fxp.hpp"

#include <algorithm>
#include <cctype>

namespace chipmunk {

FxFormat FxFormat::parse(const std::string& text) {
  // Accept "Qm.n" (case-insensitive).
  if (text.size() < 4 || (text[0] != 'Q' && text[0] != 'q'))
    throw FormatError("FxFormat: expected Qm.n, got '" + text + "'");
  auto dot = text.find('.');
  if (dot == std::string::npos)
    throw FormatError("FxFormat: expected Qm.n, got '" + text + "'");
  try {
    int int_bits = std::stoi(text.substr(1, dot - 1));
    int frac_bits = std::stoi(text.substr(dot + 1));
    return q_format(int_bits, frac_bits);
  } catch (const std::logic_error&) {
    throw FormatError("FxFormat: expected Qm.n, got '" + text + "'");
  }
}

std::string FxFormat::to_string() const {
  return "Q" + std::to_string(total_bits - 1 - frac_bits) + "." +
         std::to_string(frac_bits);
}

int64_t quantize_raw(double x, const FxFormat& fmt, bool* saturated) {
  if (std::isnan(x)) throw FormatError("quantize: NaN input");
  const int64_t lo = fmt.raw_min();
  const int64_t hi = fmt.raw_max();
  double scaled = std::ldexp(x, fmt.frac_bits);
  // Clamp before rounding so huge doubles never overflow int64.
  scaled = std::clamp(scaled, double(lo) - 1.0, double(hi) + 1.0);
  int64_t r = round_half_even(scaled);
  bool sat = r < lo || r > hi;
  if (saturated) *saturated = sat;
  return std::clamp(r, lo, hi);
}

Fx8 quantize8(double x, const FxFormat& fmt) {
  fmt.validate();
  if (fmt.total_bits != 8) throw FormatError("quantize8: needs an 8-bit format");
  return Fx8{int8_t(quantize_raw(x, fmt)), fmt};
}

Acc16 quantize16(double x, const FxFormat& fmt) {
  fmt.validate();
  if (fmt.total_bits != 16)
    throw FormatError("quantize16: needs a 16-bit format");
  return Acc16{int16_t(quantize_raw(x, fmt)), fmt};
}

Acc16 mac(const Acc16& acc, const Fx8& a, const Fx8& b) {
  if (acc.fmt.frac_bits != a.fmt.frac_bits + b.fmt.frac_bits)
    throw FormatError("mac: acc frac_bits must equal a.frac + b.frac");
  return Acc16{mac_step(acc.raw, a.raw, b.raw), acc.fmt};
}

Fx8 rescale(const Acc16& acc, const FxFormat& out_fmt) {
  out_fmt.validate();
  if (out_fmt.total_bits != 8)
    throw FormatError("rescale: output must be an 8-bit format");
  if (acc.fmt.frac_bits < out_fmt.frac_bits)
    throw FormatError("rescale: acc frac_bits must be >= output frac_bits");
  return Fx8{rescale_raw(acc.raw, acc.fmt.frac_bits - out_fmt.frac_bits),
             out_fmt};
}

ActLut build_lut(ActKind kind, const FxFormat& in_fmt, const FxFormat& out_fmt) {
  in_fmt.validate();
  out_fmt.validate();
  if (in_fmt.total_bits != 8 || out_fmt.total_bits != 8)
    throw FormatError("build_lut: in/out must be 8-bit formats");
  ActLut lut{kind, in_fmt, out_fmt, {}};
  for (int r = -128; r <= 127; ++r) {
    double x = dequantize(r, in_fmt);
    double y = (kind == ActKind::sigmoid) ? 1.0 / (1.0 + std::exp(-x))
                                          : std::tanh(x);
    lut.entries[uint8_t(int8_t(r))] = int8_t(quantize_raw(y, out_fmt));
  }
  return lut;
}

Fx8 lut_apply(const ActLut& lut, const Fx8& x) {
  if (x.fmt != lut.in_fmt)
    throw FormatError("lut_apply: input format does not match LUT");
  return Fx8{lut.apply_raw(x.raw), lut.out_fmt};
}

void FormatSet::validate() const {
  state.validate();
  weight.validate();
  bias.validate();
  acc.validate();
  if (state.total_bits != 8 || weight.total_bits != 8 || bias.total_bits != 8)
    throw FormatError("FormatSet: state/weight/bias must be 8-bit formats");
  if (acc.total_bits != 16)
    throw FormatError("FormatSet: accumulator must be a 16-bit format");
  if (acc.frac_bits != state.frac_bits + weight.frac_bits)
    throw FormatError(
        "FormatSet: acc frac_bits must equal state.frac + weight.frac");
  if (bias.frac_bits > acc.frac_bits)
    throw FormatError("FormatSet: bias frac_bits must not exceed acc");
}

}  // namespace chipmunk
