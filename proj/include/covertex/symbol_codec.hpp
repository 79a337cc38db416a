#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "covertex/error.hpp"
#include "covertex/image.hpp"

namespace covertex {

// A class label of the carrier model. Data-carrying symbols use only the
// low 2^bits_per_symbol labels; the rest of the label space is reserved.
using Label = std::uint8_t;
using SymbolStream = std::vector<Label>;

inline constexpr int kDefaultClassCount = 10;
inline constexpr int kDefaultBitsPerSymbol = 3;

inline void check_symbol_width(int bits_per_symbol, int class_count) {
  if (class_count < 2 || class_count > 16)
    throw ConfigError("class count must be in [2,16], got " + std::to_string(class_count));
  if (bits_per_symbol < 1 || bits_per_symbol > 4 || (1 << bits_per_symbol) > class_count)
    throw ConfigError("bits_per_symbol=" + std::to_string(bits_per_symbol) +
                      " does not fit in " + std::to_string(class_count) + " classes");
}

// Largest symbol width the class space supports, capped at 3 bits.
inline int header_cell_bits(int class_count) {
  int b = 1;
  while (b < 3 && (1 << (b + 1)) <= class_count) ++b;
  return b;
}

// ---------------------------------------------------------------------------
// In-band protocol header.
//
// 48 bits, MSB first:
//   version (4) | bits_per_symbol (3) | ecc block size (5, 0 = no CRC framing)
//   | payload bit length (36)
// The 48 bits are cut into cells of header_cell_bits(c) bits and the whole
// cell sequence is sent three times; the receiver takes a per-cell majority.
// ---------------------------------------------------------------------------
struct FrameHeader {
  std::uint64_t payload_bits = 0;
  int bits_per_symbol = kDefaultBitsPerSymbol;
  int ecc_block = 0;

  bool operator==(const FrameHeader&) const = default;
};

inline constexpr int kHeaderBits = 48;
inline constexpr int kHeaderCopies = 3;
inline constexpr std::uint64_t kHeaderVersion = 0xC;
inline constexpr std::uint64_t kMaxPayloadBits = (std::uint64_t{1} << 36) - 1;

inline int header_cells_per_copy(int class_count) {
  const int hb = header_cell_bits(class_count);
  return (kHeaderBits + hb - 1) / hb;
}

inline int header_cell_count(int class_count) {
  return kHeaderCopies * header_cells_per_copy(class_count);
}

inline std::uint64_t pack_header(const FrameHeader& h) {
  if (h.payload_bits > kMaxPayloadBits) throw ConfigError("payload too large for header");
  if (h.bits_per_symbol < 1 || h.bits_per_symbol > 7) throw ConfigError("bad bits_per_symbol");
  if (h.ecc_block < 0 || h.ecc_block > 31) throw ConfigError("ecc block size must be in [0,31]");
  return (kHeaderVersion << 44) | (std::uint64_t(h.bits_per_symbol) << 41) |
         (std::uint64_t(h.ecc_block) << 36) | h.payload_bits;
}

inline FrameHeader unpack_header(std::uint64_t word) {
  if ((word >> 44) != kHeaderVersion) throw FramingError("header version mismatch");
  FrameHeader h;
  h.bits_per_symbol = static_cast<int>((word >> 41) & 0x7);
  h.ecc_block = static_cast<int>((word >> 36) & 0x1F);
  h.payload_bits = word & kMaxPayloadBits;
  if (h.bits_per_symbol == 0) throw FramingError("header declares zero bits per symbol");
  return h;
}

inline SymbolStream header_to_cells(const FrameHeader& h, int class_count) {
  const int hb = header_cell_bits(class_count);
  const int per_copy = header_cells_per_copy(class_count);
  const std::uint64_t word = pack_header(h);
  SymbolStream one(static_cast<std::size_t>(per_copy));
  for (int i = 0; i < per_copy; ++i) {
    // bits beyond the 48-bit word (when hb does not divide 48) are zero
    std::uint64_t v = 0;
    for (int j = 0; j < hb; ++j) {
      const int bit = i * hb + j;
      v <<= 1;
      if (bit < kHeaderBits) v |= (word >> (kHeaderBits - 1 - bit)) & 1;
    }
    one[static_cast<std::size_t>(i)] = static_cast<Label>(v);
  }
  SymbolStream cells;
  cells.reserve(one.size() * kHeaderCopies);
  for (int c = 0; c < kHeaderCopies; ++c) cells.insert(cells.end(), one.begin(), one.end());
  return cells;
}

inline FrameHeader cells_to_header(std::span<const Label> cells, int class_count) {
  const int hb = header_cell_bits(class_count);
  const int per_copy = header_cells_per_copy(class_count);
  if (cells.size() < static_cast<std::size_t>(per_copy * kHeaderCopies))
    throw FramingError("stream shorter than the protocol header");
  std::uint64_t word = 0;
  int bit = 0;
  for (int i = 0; i < per_copy; ++i) {
    const Label a = cells[static_cast<std::size_t>(i)];
    const Label b = cells[static_cast<std::size_t>(i + per_copy)];
    const Label c = cells[static_cast<std::size_t>(i + 2 * per_copy)];
    // per-cell majority; with three distinct values fall back to the first copy
    const Label v = (b == c) ? b : a;
    if (v >= (1 << hb)) throw FramingError("header cell outside the header alphabet");
    for (int j = hb - 1; j >= 0 && bit < kHeaderBits; --j, ++bit)
      word = (word << 1) | ((v >> j) & 1u);
  }
  return unpack_header(word);
}

// ---------------------------------------------------------------------------
// Payload framing
// ---------------------------------------------------------------------------
struct MessageFrame {
  FrameHeader header;
  SymbolStream payload;

  bool operator==(const MessageFrame&) const = default;
};

inline std::size_t symbols_for_bits(std::uint64_t bits, int bits_per_symbol) {
  return static_cast<std::size_t>((bits + bits_per_symbol - 1) / bits_per_symbol);
}

// MSB-first regrouping of a byte string into bits_per_symbol-wide symbols.
// The final partial group is zero-padded.
inline MessageFrame encode_bits(std::span<const std::uint8_t> payload, int bits_per_symbol,
                                int class_count = kDefaultClassCount) {
  check_symbol_width(bits_per_symbol, class_count);
  MessageFrame frame;
  frame.header.bits_per_symbol = bits_per_symbol;
  frame.header.payload_bits = static_cast<std::uint64_t>(payload.size()) * 8;
  if (frame.header.payload_bits > kMaxPayloadBits) throw ConfigError("payload too large");
  frame.payload.reserve(symbols_for_bits(frame.header.payload_bits, bits_per_symbol));

  const unsigned mask = (1u << bits_per_symbol) - 1;
  std::uint32_t acc = 0;
  int have = 0;
  for (std::uint8_t byte : payload) {
    acc = (acc << 8) | byte;
    have += 8;
    while (have >= bits_per_symbol) {
      have -= bits_per_symbol;
      frame.payload.push_back(static_cast<Label>((acc >> have) & mask));
    }
    acc &= (1u << have) - 1;
  }
  if (have > 0) frame.payload.push_back(static_cast<Label>((acc << (bits_per_symbol - have)) & mask));
  return frame;
}

inline std::vector<std::uint8_t> decode_bits(const MessageFrame& frame) {
  const auto& h = frame.header;
  const int b = h.bits_per_symbol;
  if (b < 1 || b > 4) throw FramingError("header bits_per_symbol out of range");
  if (h.payload_bits % 8 != 0) throw FramingError("payload bit length is not a whole number of bytes");
  const std::size_t need = symbols_for_bits(h.payload_bits, b);
  if (frame.payload.size() != need)
    throw FramingError("header declares " + std::to_string(need) + " symbols, stream has " +
                       std::to_string(frame.payload.size()));

  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(h.payload_bits / 8));
  std::uint32_t acc = 0;
  int have = 0;
  for (Label s : frame.payload) {
    if (s >= (1u << b)) throw FramingError("data symbol outside the data alphabet");
    acc = (acc << b) | s;
    have += b;
    if (have >= 8 && out.size() < h.payload_bits / 8) {
      have -= 8;
      out.push_back(static_cast<std::uint8_t>(acc >> have));
      acc &= (1u << have) - 1;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Images: 8-bit pixels to 3-bit symbols and back
// ---------------------------------------------------------------------------
inline constexpr int kPixelSymbolBits = 3;

inline Label quantize_pixel(std::uint8_t p) { return static_cast<Label>(p >> 5); }
inline std::uint8_t dequantize_pixel(Label s) { return static_cast<std::uint8_t>(s * 32 + 16); }

inline SymbolStream quantize_image(const ImageBuffer& img) {
  SymbolStream out(img.size());
  std::transform(img.pixels().begin(), img.pixels().end(), out.begin(), quantize_pixel);
  return out;
}

inline ImageBuffer dequantize_image(std::span<const Label> symbols, int width, int height,
                                    int channels) {
  const ImageShape shape{width, height, channels};
  ImageBuffer img(shape);
  if (symbols.size() != img.size())
    throw FramingError("symbol count does not match " + std::to_string(width) + "x" +
                       std::to_string(height) + "x" + std::to_string(channels));
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (symbols[i] >= 8) throw FramingError("pixel symbol outside [0,7]");
    img.pixels()[i] = dequantize_pixel(symbols[i]);
  }
  return img;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------
inline void check_same_shape(const ImageBuffer& a, const ImageBuffer& b) {
  if (!(a.shape() == b.shape())) throw ConfigError("image dimensions differ");
}

inline double mape(const ImageBuffer& a, const ImageBuffer& b) {
  check_same_shape(a, b);
  if (a.size() == 0) return 0.0;
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    sum += static_cast<std::uint64_t>(std::abs(int(a.pixels()[i]) - int(b.pixels()[i])));
  return static_cast<double>(sum) / static_cast<double>(a.size());
}

// Identical images report +infinity.
inline double psnr(const ImageBuffer& a, const ImageBuffer& b) {
  check_same_shape(a, b);
  std::uint64_t sq = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const int d = int(a.pixels()[i]) - int(b.pixels()[i]);
    sq += static_cast<std::uint64_t>(d * d);
  }
  if (sq == 0) return std::numeric_limits<double>::infinity();
  const double mse = static_cast<double>(sq) / static_cast<double>(a.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

inline std::size_t hamming_distance(std::span<const Label> a, std::span<const Label> b) {
  if (a.size() != b.size()) throw ConfigError("streams differ in length");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

inline double symbol_error_rate(std::span<const Label> sent, std::span<const Label> received) {
  const std::size_t d = hamming_distance(sent, received);
  return sent.empty() ? 0.0 : static_cast<double>(d) / static_cast<double>(sent.size());
}

enum class ReceptionMetric { hamming, mape };

inline std::string_view to_string(ReceptionMetric m) {
  return m == ReceptionMetric::hamming ? "hamming" : "mape";
}

inline ReceptionMetric parse_metric(std::string_view s) {
  if (s == "hamming") return ReceptionMetric::hamming;
  if (s == "mape") return ReceptionMetric::mape;
  throw ConfigError("unknown reception metric '" + std::string(s) + "'");
}

// (l, delta)-reception: hamming is the absolute count of differing symbols,
// mape the mean absolute symbol difference.
struct ReceptionReport {
  ReceptionMetric metric = ReceptionMetric::hamming;
  double distance = 0.0;
  double threshold = 0.0;
  bool accepted = true;
};

inline ReceptionReport reception_check(std::span<const Label> sent, std::span<const Label> received,
                                       ReceptionMetric metric, double delta) {
  ReceptionReport r;
  r.metric = metric;
  r.threshold = delta;
  if (metric == ReceptionMetric::hamming) {
    r.distance = static_cast<double>(hamming_distance(sent, received));
  } else {
    if (sent.size() != received.size()) throw ConfigError("streams differ in length");
    double sum = 0;
    for (std::size_t i = 0; i < sent.size(); ++i) sum += std::abs(int(sent[i]) - int(received[i]));
    r.distance = sent.empty() ? 0.0 : sum / static_cast<double>(sent.size());
  }
  r.accepted = r.distance <= delta;
  return r;
}

inline ReceptionReport reception_check(std::span<const Label> sent, std::span<const Label> received,
                                       std::string_view metric, double delta) {
  return reception_check(sent, received, parse_metric(metric), delta);
}

}  // namespace covertex
