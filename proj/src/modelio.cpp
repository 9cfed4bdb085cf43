#include "chipmunk/modelio.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace chipmunk {

using nlohmann::json;

// --- base64 -------------------------------------------------------------------

namespace {
constexpr char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::span<const uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    uint32_t v = uint32_t(bytes[i]) << 16 | uint32_t(bytes[i + 1]) << 8 |
                 uint32_t(bytes[i + 2]);
    out += kB64Alphabet[(v >> 18) & 63];
    out += kB64Alphabet[(v >> 12) & 63];
    out += kB64Alphabet[(v >> 6) & 63];
    out += kB64Alphabet[v & 63];
  }
  size_t rem = bytes.size() - i;
  if (rem == 1) {
    uint32_t v = uint32_t(bytes[i]) << 16;
    out += kB64Alphabet[(v >> 18) & 63];
    out += kB64Alphabet[(v >> 12) & 63];
    out += "==";
  } else if (rem == 2) {
    uint32_t v = uint32_t(bytes[i]) << 16 | uint32_t(bytes[i + 1]) << 8;
    out += kB64Alphabet[(v >> 18) & 63];
    out += kB64Alphabet[(v >> 12) & 63];
    out += kB64Alphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<uint8_t> base64_decode(const std::string& text) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  uint32_t buf = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    int v = value_of(c);
    if (v < 0) throw ParseError("invalid base64 character");
    buf = (buf << 6) | uint32_t(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(uint8_t((buf >> bits) & 0xff));
    }
  }
  return out;
}

// --- json helpers --------------------------------------------------------------

namespace {

std::vector<double> decode_f32(const std::string& b64, size_t expect,
                               const std::string& field) {
  auto bytes = base64_decode(b64);
  if (bytes.size() != expect * 4)
    throw ParseError("expected " + std::to_string(expect) +
                         " float32 values (" + std::to_string(expect * 4) +
                         " bytes), got " + std::to_string(bytes.size()) +
                         " bytes",
                     field);
  std::vector<double> out(expect);
  for (size_t i = 0; i < expect; ++i) {
    uint32_t u = uint32_t(bytes[4 * i]) | uint32_t(bytes[4 * i + 1]) << 8 |
                 uint32_t(bytes[4 * i + 2]) << 16 |
                 uint32_t(bytes[4 * i + 3]) << 24;
    float f;
    std::memcpy(&f, &u, 4);
    out[i] = double(f);
  }
  return out;
}

std::string encode_f32(const std::vector<double>& values) {
  std::vector<uint8_t> bytes(values.size() * 4);
  for (size_t i = 0; i < values.size(); ++i) {
    float f = float(values[i]);
    uint32_t u;
    std::memcpy(&u, &f, 4);
    bytes[4 * i] = uint8_t(u & 0xff);
    bytes[4 * i + 1] = uint8_t((u >> 8) & 0xff);
    bytes[4 * i + 2] = uint8_t((u >> 16) & 0xff);
    bytes[4 * i + 3] = uint8_t((u >> 24) & 0xff);
  }
  return base64_encode(bytes);
}

const json& require(const json& obj, const std::string& key,
                    const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError("missing field", path + key);
  return *it;
}

Mat parse_mat(const json& j, int rows, int cols, const std::string& path) {
  if (!j.is_object()) throw ParseError("expected object", path);
  const auto& shape = require(j, "shape", path + ".");
  if (!shape.is_array() || shape.size() != 2 || !shape[0].is_number_integer() ||
      !shape[1].is_number_integer())
    throw ParseError("expected [rows, cols]", path + ".shape");
  if (shape[0].get<int>() != rows || shape[1].get<int>() != cols)
    throw ParseError("expected shape [" + std::to_string(rows) + ", " +
                         std::to_string(cols) + "], got [" +
                         std::to_string(shape[0].get<int>()) + ", " +
                         std::to_string(shape[1].get<int>()) + "]",
                     path + ".shape");
  const auto& data = require(j, "data", path + ".");
  if (!data.is_string()) throw ParseError("expected base64 string", path + ".data");
  Mat m(rows, cols);
  m.data = decode_f32(data.get<std::string>(), size_t(rows) * cols,
                      path + ".data");
  return m;
}

std::vector<double> parse_vec(const json& j, int n, const std::string& path) {
  if (!j.is_object()) throw ParseError("expected object", path);
  const auto& shape = require(j, "shape", path + ".");
  if (!shape.is_array() || shape.size() != 1 || !shape[0].is_number_integer() ||
      shape[0].get<int>() != n)
    throw ParseError("expected shape [" + std::to_string(n) + "]",
                     path + ".shape");
  const auto& data = require(j, "data", path + ".");
  if (!data.is_string()) throw ParseError("expected base64 string", path + ".data");
  return decode_f32(data.get<std::string>(), size_t(n), path + ".data");
}

json mat_json(const Mat& m) {
  return json{{"shape", {m.rows, m.cols}}, {"data", encode_f32(m.data)}};
}

json vec_json(const std::vector<double>& v) {
  return json{{"shape", {int(v.size())}}, {"data", encode_f32(v)}};
}

}  // namespace

NetworkModel parse_network(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("document must be an object");
  const auto& format = require(doc, "format", "");
  if (!format.is_string() || format.get<std::string>() != "chipmunk-network")
    throw ParseError("expected \"chipmunk-network\"", "format");
  const auto& version = require(doc, "version", "");
  if (!version.is_number_integer() || version.get<int>() != 1)
    throw ParseError("unsupported version", "version");

  NetworkModel net;
  if (doc.contains("name") && doc["name"].is_string())
    net.name = doc["name"].get<std::string>();

  const auto& layers = require(doc, "layers", "");
  if (!layers.is_array() || layers.empty())
    throw ParseError("expected a non-empty array", "layers");

  for (size_t li = 0; li < layers.size(); ++li) {
    const std::string base = "layers[" + std::to_string(li) + "]";
    const auto& jl = layers[li];
    if (!jl.is_object()) throw ParseError("expected object", base);
    LstmLayerParams p;
    const auto& jnx = require(jl, "n_x", base + ".");
    const auto& jnh = require(jl, "n_h", base + ".");
    if (!jnx.is_number_integer() || jnx.get<int>() <= 0)
      throw ParseError("must be a positive integer", base + ".n_x");
    if (!jnh.is_number_integer() || jnh.get<int>() <= 0)
      throw ParseError("must be a positive integer", base + ".n_h");
    p.n_x = jnx.get<int>();
    p.n_h = jnh.get<int>();
    p.w_xi = parse_mat(require(jl, "w_xi", base + "."), p.n_h, p.n_x, base + ".w_xi");
    p.w_xf = parse_mat(require(jl, "w_xf", base + "."), p.n_h, p.n_x, base + ".w_xf");
    p.w_xc = parse_mat(require(jl, "w_xc", base + "."), p.n_h, p.n_x, base + ".w_xc");
    p.w_xo = parse_mat(require(jl, "w_xo", base + "."), p.n_h, p.n_x, base + ".w_xo");
    p.w_hi = parse_mat(require(jl, "w_hi", base + "."), p.n_h, p.n_h, base + ".w_hi");
    p.w_hf = parse_mat(require(jl, "w_hf", base + "."), p.n_h, p.n_h, base + ".w_hf");
    p.w_hc = parse_mat(require(jl, "w_hc", base + "."), p.n_h, p.n_h, base + ".w_hc");
    p.w_ho = parse_mat(require(jl, "w_ho", base + "."), p.n_h, p.n_h, base + ".w_ho");
    p.w_ci = parse_vec(require(jl, "w_ci", base + "."), p.n_h, base + ".w_ci");
    p.w_cf = parse_vec(require(jl, "w_cf", base + "."), p.n_h, base + ".w_cf");
    p.w_co = parse_vec(require(jl, "w_co", base + "."), p.n_h, base + ".w_co");
    p.b_i = parse_vec(require(jl, "b_i", base + "."), p.n_h, base + ".b_i");
    p.b_f = parse_vec(require(jl, "b_f", base + "."), p.n_h, base + ".b_f");
    p.b_c = parse_vec(require(jl, "b_c", base + "."), p.n_h, base + ".b_c");
    p.b_o = parse_vec(require(jl, "b_o", base + "."), p.n_h, base + ".b_o");
    net.layers.push_back(std::move(p));
  }

  if (doc.contains("dense") && !doc["dense"].is_null()) {
    const auto& jd = doc["dense"];
    if (!jd.is_object()) throw ParseError("expected object", "dense");
    const auto& jhy = require(jd, "w_hy", "dense.");
    const auto& shape = require(jhy, "shape", "dense.w_hy.");
    if (!shape.is_array() || shape.size() != 2)
      throw ParseError("expected [n_y, n_h]", "dense.w_hy.shape");
    int n_y = shape[0].get<int>();
    int n_h = shape[1].get<int>();
    DenseParams d;
    d.w_hy = parse_mat(jhy, n_y, n_h, "dense.w_hy");
    net.dense = std::move(d);
  }

  net.validate();  // throws DimensionError on a broken layer chain
  return net;
}

NetworkModel parse_network_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open network file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_network(ss.str());
}

std::string write_network(const NetworkModel& net) {
  net.validate();
  json doc;
  doc["format"] = "chipmunk-network";
  doc["version"] = 1;
  doc["name"] = net.name;
  doc["layers"] = json::array();
  for (const auto& p : net.layers) {
    json jl;
    jl["n_x"] = p.n_x;
    jl["n_h"] = p.n_h;
    jl["w_xi"] = mat_json(p.w_xi);
    jl["w_xf"] = mat_json(p.w_xf);
    jl["w_xc"] = mat_json(p.w_xc);
    jl["w_xo"] = mat_json(p.w_xo);
    jl["w_hi"] = mat_json(p.w_hi);
    jl["w_hf"] = mat_json(p.w_hf);
    jl["w_hc"] = mat_json(p.w_hc);
    jl["w_ho"] = mat_json(p.w_ho);
    jl["w_ci"] = vec_json(p.w_ci);
    jl["w_cf"] = vec_json(p.w_cf);
    jl["w_co"] = vec_json(p.w_co);
    jl["b_i"] = vec_json(p.b_i);
    jl["b_f"] = vec_json(p.b_f);
    jl["b_c"] = vec_json(p.b_c);
    jl["b_o"] = vec_json(p.b_o);
    doc["layers"].push_back(std::move(jl));
  }
  if (net.dense) doc["dense"] = json{{"w_hy", mat_json(net.dense->w_hy)}};
  return doc.dump(2);
}

void write_network_file(const NetworkModel& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write network file: " + path);
  out << write_network(net);
}

// --- quantization ---------------------------------------------------------------

namespace {

int pad_to(int n, int block) { return (n + block - 1) / block * block; }

// Quantize a dense double tensor into a zero-padded int8 row-major buffer.
std::vector<int8_t> quantize_padded(const double* src, int rows, int cols,
                                    int rows_pad, int cols_pad,
                                    const FxFormat& fmt, uint64_t& sat_count) {
  std::vector<int8_t> out(size_t(rows_pad) * size_t(cols_pad), 0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      bool sat = false;
      out[size_t(r) * cols_pad + c] =
          int8_t(quantize_raw(src[size_t(r) * cols + c], fmt, &sat));
      sat_count += sat;
    }
  return out;
}

}  // namespace

QuantizeResult quantize_model(const NetworkModel& model, const FormatSet& fmts,
                              int block) {
  model.validate();
  fmts.validate();
  if (block <= 0) throw DimensionError("quantize_model: block must be positive");

  QuantizeResult res;
  res.net.name = model.name;
  res.net.block = block;
  res.net.fmts = fmts;

  auto record = [&](const std::string& tensor, uint64_t count) {
    res.saturation.entries.push_back({tensor, count});
    res.saturation.total += count;
  };

  for (size_t li = 0; li < model.layers.size(); ++li) {
    const auto& p = model.layers[li];
    const std::string base = "layers[" + std::to_string(li) + "].";
    QuantizedLayer q;
    q.n_x = p.n_x;
    q.n_h = p.n_h;
    q.n_x_pad = pad_to(p.n_x, block);
    q.n_h_pad = pad_to(p.n_h, block);
    q.block = block;
    q.fmts = fmts;

    const Mat* wx[4] = {&p.w_xi, &p.w_xf, &p.w_xc, &p.w_xo};
    const Mat* wh[4] = {&p.w_hi, &p.w_hf, &p.w_hc, &p.w_ho};
    const std::vector<double>* bias[4] = {&p.b_i, &p.b_f, &p.b_c, &p.b_o};
    const std::vector<double>* peep[3] = {&p.w_ci, &p.w_cf, &p.w_co};
    const char* wx_names[4] = {"w_xi", "w_xf", "w_xc", "w_xo"};
    const char* wh_names[4] = {"w_hi", "w_hf", "w_hc", "w_ho"};
    const char* bias_names[4] = {"b_i", "b_f", "b_c", "b_o"};
    const char* peep_names[3] = {"w_ci", "w_cf", "w_co"};

    for (int g = 0; g < 4; ++g) {
      uint64_t sat = 0;
      q.wx[g] = quantize_padded(wx[g]->data.data(), p.n_h, p.n_x, q.n_h_pad,
                                q.n_x_pad, fmts.weight, sat);
      record(base + wx_names[g], sat);
      sat = 0;
      q.wh[g] = quantize_padded(wh[g]->data.data(), p.n_h, p.n_h, q.n_h_pad,
                                q.n_h_pad, fmts.weight, sat);
      record(base + wh_names[g], sat);
      sat = 0;
      q.bias[g] = quantize_padded(bias[g]->data(), p.n_h, 1, q.n_h_pad, 1,
                                  fmts.bias, sat);
      record(base + bias_names[g], sat);
    }
    for (int k = 0; k < 3; ++k) {
      uint64_t sat = 0;
      q.peephole[k] = quantize_padded(peep[k]->data(), p.n_h, 1, q.n_h_pad, 1,
                                      fmts.weight, sat);
      record(base + peep_names[k], sat);
    }
    q.validate();
    res.net.layers.push_back(std::move(q));
  }

  if (model.dense) {
    QuantizedDense d;
    d.n_y = model.dense->n_y();
    d.n_h = model.dense->n_h();
    d.n_h_pad = pad_to(d.n_h, block);
    d.block = block;
    d.fmts = fmts;
    uint64_t sat = 0;
    d.w_hy = quantize_padded(model.dense->w_hy.data.data(), d.n_y, d.n_h,
                             d.n_y, d.n_h_pad, fmts.weight, sat);
    record("dense.w_hy", sat);
    res.net.dense = std::move(d);
  }
  return res;
}

// --- weight streams ---------------------------------------------------------------

size_t stream_size_bytes(int rows, int x_cols, int h_cols, bool include_bias) {
  return kStreamHeaderBytes +
         4 * (size_t(rows) * x_cols + size_t(rows) * h_cols) +
         (include_bias ? 7 * size_t(rows) : 0);
}

size_t stream_size_bytes(const QuantizedLayer& layer, const StreamSelect& sel) {
  return stream_size_bytes(sel.n_row_blocks * layer.block,
                           sel.n_x_blocks * layer.block,
                           sel.n_h_blocks * layer.block, sel.include_bias);
}

namespace {

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(uint8_t(v & 0xff));
  out.push_back(uint8_t(v >> 8));
}

// Append a rows x cols window of a padded row-major matrix.
void append_window(std::vector<uint8_t>& out, const std::vector<int8_t>& m,
                   int stride, int row0, int rows, int col0, int cols) {
  for (int r = 0; r < rows; ++r) {
    const int8_t* src = m.data() + size_t(row0 + r) * stride + col0;
    out.insert(out.end(), reinterpret_cast<const uint8_t*>(src),
               reinterpret_cast<const uint8_t*>(src) + cols);
  }
}

}  // namespace

std::vector<uint8_t> write_weight_stream(const QuantizedLayer& layer,
                                         const StreamSelect& sel) {
  const int B = layer.block;
  if (sel.n_row_blocks < 1 || sel.row_block < 0 ||
      sel.row_block + sel.n_row_blocks > layer.n_h_blocks())
    throw DimensionError("write_weight_stream: row blocks out of range");
  if (sel.n_x_blocks < 0 ||
      (sel.n_x_blocks > 0 &&
       (sel.x_block < 0 || sel.x_block + sel.n_x_blocks > layer.n_x_blocks())))
    throw DimensionError("write_weight_stream: x blocks out of range");
  if (sel.n_h_blocks < 0 ||
      (sel.n_h_blocks > 0 &&
       (sel.h_block < 0 || sel.h_block + sel.n_h_blocks > layer.n_h_blocks())))
    throw DimensionError("write_weight_stream: h blocks out of range");

  const int rows = sel.n_row_blocks * B;
  const int x_cols = sel.n_x_blocks * B;
  const int h_cols = sel.n_h_blocks * B;
  const int row0 = sel.row_block * B;

  std::vector<uint8_t> out;
  out.reserve(stream_size_bytes(layer, sel));
  out.insert(out.end(), {'C', 'H', 'M', 'K'});
  out.push_back(kStreamVersion);
  out.push_back(kGateOrderCode);
  out.push_back(uint8_t((layer.fmts.bias.frac_bits << 4) |
                        (sel.include_bias ? 1 : 0)));
  out.push_back(uint8_t(layer.fmts.weight.frac_bits));
  out.push_back(uint8_t(layer.fmts.state.frac_bits));
  out.push_back(uint8_t(layer.fmts.acc.frac_bits));
  put_u16(out, uint16_t(rows));
  put_u16(out, uint16_t(x_cols));
  put_u16(out, uint16_t(h_cols));

  for (int g = 0; g < 4; ++g) {
    if (x_cols > 0)
      append_window(out, layer.wx[g], layer.n_x_pad, row0, rows,
                    sel.x_block * B, x_cols);
    if (h_cols > 0)
      append_window(out, layer.wh[g], layer.n_h_pad, row0, rows,
                    sel.h_block * B, h_cols);
  }
  if (sel.include_bias) {
    for (int g = 0; g < 4; ++g)
      append_window(out, layer.bias[g], 1, row0, rows, 0, 1);
    for (int k = 0; k < 3; ++k)
      append_window(out, layer.peephole[k], 1, row0, rows, 0, 1);
  }
  return out;
}

std::vector<uint8_t> write_layer_stream(const QuantizedLayer& layer) {
  StreamSelect sel;
  sel.row_block = 0;
  sel.n_row_blocks = layer.n_h_blocks();
  sel.x_block = 0;
  sel.n_x_blocks = layer.n_x_blocks();
  sel.h_block = 0;
  sel.n_h_blocks = layer.n_h_blocks();
  sel.include_bias = true;
  return write_weight_stream(layer, sel);
}

size_t StreamHeader::payload_bytes() const {
  return stream_size_bytes(rows, x_cols, h_cols, has_bias) - kStreamHeaderBytes;
}

StreamHeader parse_stream_header(std::span<const uint8_t> bytes) {
  if (bytes.size() < kStreamHeaderBytes)
    throw LoadError("weight stream shorter than header", bytes.size());
  if (bytes[0] != 'C' || bytes[1] != 'H' || bytes[2] != 'M' || bytes[3] != 'K')
    throw LoadError("bad magic (expected CHMK)", 0);
  if (bytes[4] != kStreamVersion) throw LoadError("unsupported version", 4);
  if (bytes[5] != kGateOrderCode)
    throw LoadError("unsupported gate order", 5);

  StreamHeader h;
  h.has_bias = (bytes[6] & 1) != 0;
  int bias_frac = bytes[6] >> 4;
  int w_frac = bytes[7];
  int s_frac = bytes[8];
  int a_frac = bytes[9];
  h.rows = bytes[10] | bytes[11] << 8;
  h.x_cols = bytes[12] | bytes[13] << 8;
  h.h_cols = bytes[14] | bytes[15] << 8;

  try {
    h.fmts.state = FxFormat{8, s_frac};
    h.fmts.weight = FxFormat{8, w_frac};
    h.fmts.bias = FxFormat{8, bias_frac};
    h.fmts.acc = FxFormat{16, a_frac};
    h.fmts.validate();
  } catch (const FormatError& e) {
    throw LoadError(std::string("bad formats in header: ") + e.what(), 6);
  }
  if (h.rows <= 0) throw LoadError("rows must be positive", 10);
  if (h.x_cols < 0 || h.h_cols < 0 || (h.x_cols == 0 && h.h_cols == 0))
    throw LoadError("stream carries no weight columns", 12);

  const size_t want = kStreamHeaderBytes + h.payload_bytes();
  if (bytes.size() < want)
    throw LoadError("stream underrun: expected " + std::to_string(want) +
                        " bytes",
                    bytes.size());
  if (bytes.size() > want)
    throw LoadError("stream overrun: expected " + std::to_string(want) +
                        " bytes",
                    want);
  return h;
}

QuantizedLayer read_layer_stream(std::span<const uint8_t> bytes, int block,
                                 int real_n_x, int real_n_h) {
  StreamHeader h = parse_stream_header(bytes);
  if (block <= 0 || h.rows % block != 0 || h.x_cols % block != 0 ||
      h.h_cols % block != 0)
    throw LoadError("layer stream dims are not block multiples", 10);
  if (h.h_cols != h.rows)
    throw LoadError("layer stream must be square in h", 14);
  if (!h.has_bias) throw LoadError("layer stream must carry bias/peepholes", 6);

  QuantizedLayer q;
  q.n_x_pad = h.x_cols;
  q.n_h_pad = h.rows;
  q.n_x = real_n_x > 0 ? real_n_x : h.x_cols;
  q.n_h = real_n_h > 0 ? real_n_h : h.rows;
  q.block = block;
  q.fmts = h.fmts;

  const uint8_t* p = bytes.data() + kStreamHeaderBytes;
  auto take = [&](size_t count) {
    const int8_t* src = reinterpret_cast<const int8_t*>(p);
    p += count;
    return std::vector<int8_t>(src, src + count);
  };
  for (int g = 0; g < 4; ++g) {
    q.wx[g] = take(size_t(h.rows) * h.x_cols);
    q.wh[g] = take(size_t(h.rows) * h.h_cols);
  }
  for (int g = 0; g < 4; ++g) q.bias[g] = take(size_t(h.rows));
  for (int k = 0; k < 3; ++k) q.peephole[k] = take(size_t(h.rows));
  q.validate();
  return q;
}

// --- file helpers -------------------------------------------------------------------

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::string& path, std::span<const uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write file: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            std::streamsize(bytes.size()));
}

}  // namespace chipmunk
