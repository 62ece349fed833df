#include "gridforge/sfp4.hpp"

#include <bit>
#include <cmath>
#include <fstream>

#include "gridforge/error.hpp"
#include "gridforge/format.hpp"
#include "gridforge/numeric.hpp"
#include "gridforge/quant.hpp"

namespace gridforge {

namespace {
constexpr double kDefaultDivisor[] = {6.0};
constexpr std::uint32_t kFileVersion = 1;
}  // namespace

std::uint8_t pack_scale_byte(ScaleByte s) {
  if (s.selector > 2) throw EncodingError("SFP4 selector must be 0, 1 or 2");
  if (s.magnitude > 63) throw EncodingError("SFP4 scale magnitude must fit in 6 bits");
  return static_cast<std::uint8_t>((s.selector << 6) | s.magnitude);
}

ScaleByte unpack_scale_byte(std::uint8_t byte) noexcept {
  return {static_cast<std::uint8_t>(byte >> 6), static_cast<std::uint8_t>(byte & 0x3F)};
}

double selector_offset(std::uint8_t selector, double shift_c) {
  switch (selector) {
    case 0: return 0.0;
    case 1: return shift_c;
    case 2: return -shift_c;
    default: throw CorruptBlockError("SFP4 selector 3 is reserved");
  }
}

GridFamily sfp4_family(double shift_c) {
  if (!(shift_c >= 0.0) || !std::isfinite(shift_c)) throw ParameterError("shift_c must be >= 0");
  const auto vals = LowBitFormat::e2m1().values();
  return GridFamily("SFP4",
                    {Grid("SFP4.A", vals, 6.0, false, FormatKind::E2M1),
                     Grid("SFP4.B+", vals, 6.0, false, FormatKind::E2M1),
                     Grid("SFP4.B-", vals, 6.0, false, FormatKind::E2M1)},
                    Selector::MinMSE, {0.0, shift_c, -shift_c});
}

namespace {

Sfp4Block encode_with(std::span<const double> x, const GridFamily& fam, double shift_c,
                      std::span<const double> divisors) {
  static const LowBitFormat e2m1 = LowBitFormat::e2m1();
  QuantOptions opts;
  opts.scale_divisors.assign(divisors.begin(), divisors.end());
  if (opts.scale_divisors.empty()) opts.scale_divisors.assign(std::begin(kDefaultDivisor), std::end(kDefaultDivisor));
  opts.scale_format = LowBitFormat::e3m3u();
  const QuantizeResult q = quantize_block(x, fam, opts);
  const auto pts = fam.grid(q.block.grid_index).points();
  Sfp4Block out;
  out.shift_c = shift_c;
  out.e2m1_codes.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out.e2m1_codes[i] = e2m1.encode(pts[q.block.codes[i]]).code;
  out.scale_byte = pack_scale_byte({q.block.grid_index, q.block.scale_code.value_or(0)});
  out.scale_saturated = q.block.scale_saturated;
  out.mse = q.loss.mse;
  return out;
}

}  // namespace

Sfp4Block sfp4_encode(std::span<const double> x, double shift_c, std::span<const double> divisors) {
  if (x.empty()) throw InputError("empty block");
  return encode_with(x, sfp4_family(shift_c), shift_c, divisors);
}

std::vector<double> sfp4_decode(const Sfp4Block& b) {
  static const LowBitFormat e2m1 = LowBitFormat::e2m1();
  static const LowBitFormat e3m3u = LowBitFormat::e3m3u();
  const ScaleByte sb = unpack_scale_byte(b.scale_byte);
  const double off = selector_offset(sb.selector, b.shift_c);
  const double s = e3m3u.decode(sb.magnitude);
  std::vector<double> out(b.e2m1_codes.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (b.e2m1_codes[i] > 15) throw CorruptBlockError("E2M1 code wider than 4 bits");
    out[i] = s * (e2m1.decode(b.e2m1_codes[i]) + off);
  }
  return out;
}

Sfp4Block Sfp4Tensor::block(std::size_t row, std::size_t b) const {
  Sfp4Block out;
  out.shift_c = shift_c;
  const std::size_t start = row * cols + b * g;
  out.e2m1_codes.assign(codes.begin() + static_cast<std::ptrdiff_t>(start),
                        codes.begin() + static_cast<std::ptrdiff_t>(start + g));
  out.scale_byte = scale_bytes[row * blocks_per_row() + b];
  return out;
}

Sfp4Tensor sfp4_encode_matrix(std::span<const double> w, std::size_t rows, std::size_t cols,
                              std::size_t g, double shift_c, std::span<const double> divisors) {
  if (g == 0 || cols % g != 0) throw ShapeError("K must be a positive multiple of g");
  if (w.size() != rows * cols) throw ShapeError("weight size does not match rows * cols");
  const GridFamily fam = sfp4_family(shift_c);
  Sfp4Tensor t;
  t.rows = rows;
  t.cols = cols;
  t.g = g;
  t.shift_c = shift_c;
  t.codes.resize(rows * cols);
  t.scale_bytes.resize(rows * cols / g);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t b = 0; b < cols / g; ++b) {
      const Sfp4Block blk = encode_with(w.subspan(r * cols + b * g, g), fam, shift_c, divisors);
      std::copy(blk.e2m1_codes.begin(), blk.e2m1_codes.end(),
                t.codes.begin() + static_cast<std::ptrdiff_t>(r * cols + b * g));
      t.scale_bytes[r * (cols / g) + b] = blk.scale_byte;
      if (blk.scale_saturated) ++t.saturated_scales;
    }
  }
  return t;
}

std::vector<double> sfp4_decode_matrix(const Sfp4Tensor& t) {
  std::vector<double> out(t.rows * t.cols);
  for (std::size_t r = 0; r < t.rows; ++r) {
    for (std::size_t b = 0; b < t.blocks_per_row(); ++b) {
      const auto v = sfp4_decode(t.block(r, b));
      std::copy(v.begin(), v.end(), out.begin() + static_cast<std::ptrdiff_t>(r * t.cols + b * t.g));
    }
  }
  return out;
}

std::vector<double> sfp4_correction_matrix(const Sfp4Tensor& w) {
  static const LowBitFormat e3m3u = LowBitFormat::e3m3u();
  std::vector<double> c(w.scale_bytes.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const ScaleByte sb = unpack_scale_byte(w.scale_bytes[i]);
    const double s = e3m3u.decode(sb.magnitude);
    switch (sb.selector) {
      case 0: c[i] = 0.0; break;
      case 1: c[i] = -s; break;
      case 2: c[i] = s; break;
      default: throw CorruptBlockError("SFP4 selector 3 is reserved");
    }
  }
  return c;
}

MatmulCheck sfp4_matmul_reference(const Sfp4Tensor& w, std::span<const double> x, std::size_t n) {
  static const LowBitFormat e2m1 = LowBitFormat::e2m1();
  static const LowBitFormat e3m3u = LowBitFormat::e3m3u();
  const std::size_t m = w.rows;
  const std::size_t k = w.cols;
  if (x.size() != k * n) throw ShapeError("activation matrix must be K x N");
  if (w.g == 0 || k % w.g != 0) throw ShapeError("K must be a multiple of g");
  const std::size_t nb = w.blocks_per_row();

  const std::vector<double> dense_w = sfp4_decode_matrix(w);
  // Base E2M1 weights: scale times the unshifted level.
  std::vector<double> base_w(m * k);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t b = 0; b < nb; ++b) {
      const double s = e3m3u.decode(unpack_scale_byte(w.scale_bytes[r * nb + b]).magnitude);
      for (std::size_t i = 0; i < w.g; ++i) {
        const std::size_t idx = r * k + b * w.g + i;
        base_w[idx] = s * e2m1.decode(w.codes[idx]);
      }
    }
  }
  const std::vector<double> corr = sfp4_correction_matrix(w);
  std::vector<double> xsum(nb * n);
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t col = 0; col < n; ++col) {
      CompensatedSum s;
      for (std::size_t i = 0; i < w.g; ++i) s.add(x[(b * w.g + i) * n + col]);
      xsum[b * n + col] = s.value();
    }
  }

  MatmulCheck out;
  out.dense.resize(m * n);
  out.decomposed.resize(m * n);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t col = 0; col < n; ++col) {
      CompensatedSum dense, main, mag;
      for (std::size_t i = 0; i < k; ++i) {
        const double xv = x[i * n + col];
        dense.add(dense_w[r * k + i] * xv);
        main.add(base_w[r * k + i] * xv);
        mag.add(std::abs(dense_w[r * k + i] * xv));
      }
      CompensatedSum correction;
      for (std::size_t b = 0; b < nb; ++b) correction.add(corr[r * nb + b] * xsum[b * n + col]);
      const double y_dense = dense.value();
      const double y_dec = main.value() - w.shift_c * correction.value();
      out.dense[r * n + col] = y_dense;
      out.decomposed[r * n + col] = y_dec;
      const double diff = std::abs(y_dense - y_dec);
      const double denom = mag.value();
      out.max_rel_err = std::max(out.max_rel_err, denom > 0.0 ? diff / denom : diff);
    }
  }
  return out;
}

namespace {

void put_u32(std::ostream& o, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) o.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::ostream& o, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) o.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}
std::uint64_t get_le(std::istream& in, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw InputError("truncated SFP4 file");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

}  // namespace

void write_sfp4(const std::filesystem::path& path, const Sfp4Tensor& t) {
  std::ofstream o(path, std::ios::binary);
  if (!o) throw InputError("cannot write " + path.string());
  o.write("SFP4", 4);
  put_u32(o, kFileVersion);
  put_u64(o, t.rows);
  put_u64(o, t.cols);
  put_u64(o, t.g);
  put_u64(o, std::bit_cast<std::uint64_t>(t.shift_c));
  for (std::size_t i = 0; i < t.codes.size(); i += 2) {
    const std::uint8_t lo = t.codes[i] & 0x0F;
    const std::uint8_t hi = i + 1 < t.codes.size() ? (t.codes[i + 1] & 0x0F) : 0;
    o.put(static_cast<char>(lo | (hi << 4)));
  }
  o.write(reinterpret_cast<const char*>(t.scale_bytes.data()),
          static_cast<std::streamsize>(t.scale_bytes.size()));
  if (!o) throw InputError("write failed for " + path.string());
}

Sfp4Tensor read_sfp4(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != "SFP4") {
    throw InputError("not an SFP4 file: " + path.string());
  }
  const auto version = static_cast<std::uint32_t>(get_le(in, 4));
  if (version != kFileVersion) throw InputError("unsupported SFP4 version " + std::to_string(version));
  Sfp4Tensor t;
  t.rows = get_le(in, 8);
  t.cols = get_le(in, 8);
  t.g = get_le(in, 8);
  t.shift_c = std::bit_cast<double>(get_le(in, 8));
  if (t.g == 0 || t.cols % t.g != 0) throw ShapeError("SFP4 header: K not a multiple of g");
  if (t.rows != 0 && t.cols > (std::size_t{1} << 40) / t.rows) throw InputError("SFP4 header: implausible shape");
  t.codes.resize(t.rows * t.cols);
  for (std::size_t i = 0; i < t.codes.size(); i += 2) {
    const auto byte = static_cast<std::uint8_t>(get_le(in, 1));
    t.codes[i] = byte & 0x0F;
    if (i + 1 < t.codes.size()) t.codes[i + 1] = byte >> 4;
  }
  t.scale_bytes.resize(t.rows * t.cols / t.g);
  for (auto& b : t.scale_bytes) {
    b = static_cast<std::uint8_t>(get_le(in, 1));
    if ((b >> 6) == 3) throw CorruptBlockError("SFP4 selector 3 is reserved");
  }
  return t;
}

ShiftCalibration sfp4_calibrate_shift(const BlockPool& pool, std::vector<double> candidates,
                                      std::span<const double> divisors, int threads) {
  if (candidates.empty()) throw ParameterError("no shift candidates");
  if (pool.empty()) throw InsufficientDataError("empty pool");
  ShiftCalibration cal;
  double best = 0.0;
  for (double c : candidates) {
    const GridFamily fam = sfp4_family(c);
    std::vector<double> mse(pool.size());
    parallel_for(pool.size(), threads, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t b = lo; b < hi; ++b) mse[b] = encode_with(pool.block(b), fam, c, divisors).mse;
    });
    const double m = compensated_sum(mse) / static_cast<double>(pool.size());
    cal.table.emplace_back(c, m);
    if (cal.table.size() == 1 || m < best) {
      best = m;
      cal.best_c = c;
    }
  }
  return cal;
}

}  // namespace gridforge
