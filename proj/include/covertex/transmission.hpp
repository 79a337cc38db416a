#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "covertex/address_space.hpp"
#include "covertex/cec.hpp"
#include "covertex/channel.hpp"
#include "covertex/error.hpp"
#include "covertex/image.hpp"
#include "covertex/reader.hpp"
#include "covertex/symbol_codec.hpp"

namespace covertex {

// Sender-side layout of a message in the address sequence:
//   [protocol header cells][payload cells, CRC-framed when ecc_block > 0]
struct TransmitOptions {
  int class_count = kDefaultClassCount;
  int bits_per_symbol = kDefaultBitsPerSymbol;
  int ecc_block = 0;  // data cells per CRC block, 0 = no framing
};

inline CecConfig framing_config(int ecc_block, int bits_per_symbol) {
  CecConfig cfg;
  cfg.data_cells = ecc_block;
  cfg.bits_per_symbol = bits_per_symbol;
  return cfg;
}

inline std::size_t payload_cell_count(const FrameHeader& h) {
  const std::size_t data = symbols_for_bits(h.payload_bits, h.bits_per_symbol);
  return h.ecc_block > 0 ? framed_length(data, framing_config(h.ecc_block, h.bits_per_symbol)) : data;
}

inline std::size_t transmission_length(const FrameHeader& h, int class_count) {
  return static_cast<std::size_t>(header_cell_count(class_count)) + payload_cell_count(h);
}

struct Transmission {
  FrameHeader header;
  SymbolStream data;   // payload symbols before framing
  SymbolStream cells;  // everything that goes to the addresses
};

inline Transmission build_transmission(std::span<const std::uint8_t> payload, const TransmitOptions& opt) {
  check_symbol_width(opt.bits_per_symbol, opt.class_count);
  MessageFrame frame = encode_bits(payload, opt.bits_per_symbol, opt.class_count);
  frame.header.ecc_block = opt.ecc_block;
  Transmission t;
  t.header = frame.header;
  t.cells = header_to_cells(frame.header, opt.class_count);
  if (opt.ecc_block > 0) {
    const SymbolStream framed = frame_with_checksums(frame.payload, framing_config(opt.ecc_block, opt.bits_per_symbol));
    t.cells.insert(t.cells.end(), framed.begin(), framed.end());
  } else {
    t.cells.insert(t.cells.end(), frame.payload.begin(), frame.payload.end());
  }
  t.data = std::move(frame.payload);
  return t;
}

struct ReceiveOptions {
  int class_count = kDefaultClassCount;
  bool use_cec = true;
  int top_k = 4;
  int depth_limit = 650;
  unsigned threads = 0;
  double smoothing = kDefaultSmoothing;
};

struct Reception {
  FrameHeader header;
  SymbolStream data;            // recovered payload symbols, unframed
  SymbolStream data_uncorrected;
  std::vector<std::uint8_t> bytes;
  std::size_t reserved_replaced = 0;  // data cells that read a reserved label
  std::optional<MessageCorrection> correction;
};

// Decodes a full read-back. cells[i] is the ranking of address i; only the
// top candidate is used unless CRC framing is present and use_cec is set.
inline Reception recover(std::span<const RankedCell> cells, const ReceiveOptions& opt) {
  const std::size_t hc = static_cast<std::size_t>(header_cell_count(opt.class_count));
  if (cells.size() < hc) throw FramingError("stream shorter than the protocol header");
  SymbolStream top(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) top[i] = cells[i].top();

  Reception r;
  r.header = cells_to_header(std::span<const Label>(top).first(hc), opt.class_count);
  check_symbol_width(r.header.bits_per_symbol, opt.class_count);
  const std::size_t body = payload_cell_count(r.header);
  if (cells.size() < hc + body)
    throw FramingError("header declares " + std::to_string(body) + " payload cells, only " +
                       std::to_string(cells.size() - hc) + " read");
  const std::size_t n_data = symbols_for_bits(r.header.payload_bits, r.header.bits_per_symbol);
  const auto top_body = std::span<const Label>(top).subspan(hc, body);

  if (r.header.ecc_block > 0) {
    CecConfig cfg = framing_config(r.header.ecc_block, r.header.bits_per_symbol);
    cfg.top_k = opt.top_k;
    cfg.depth_limit = opt.depth_limit;
    r.data_uncorrected = deframe(top_body, cfg, n_data);
    if (opt.use_cec) {
      r.correction = cec_correct_message(cells.subspan(hc, body), cfg, opt.threads);
      r.data = deframe(r.correction->symbols, cfg, n_data);
    } else {
      r.data = r.data_uncorrected;
    }
  } else {
    r.data.assign(top_body.begin(), top_body.end());
    r.data_uncorrected = r.data;
  }

  const unsigned limit = 1u << r.header.bits_per_symbol;
  SymbolStream clean = r.data;
  for (Label& s : clean)
    if (s >= limit) {
      s = 0;
      ++r.reserved_replaced;
    }
  r.bytes = decode_bits(MessageFrame{r.header, clean});
  return r;
}

inline std::vector<RankedCell> certain_cells(std::span<const Label> top1, int class_count) {
  std::vector<RankedCell> out;
  out.reserve(top1.size());
  ReadObservation obs;
  obs.n = 1;
  for (Label l : top1) {
    obs.counts.assign(static_cast<std::size_t>(class_count), 0);
    if (l >= class_count) throw FramingError("symbol outside the class space");
    obs.counts[l] = 1;
    out.push_back(rank_observation(obs, kDefaultSmoothing));
  }
  return out;
}

inline Reception recover(std::span<const Label> top1, const ReceiveOptions& opt) {
  const auto cells = certain_cells(top1, opt.class_count);
  return recover(std::span<const RankedCell>(cells), opt);
}

// Addresses 0..count-1 of the message, produced on demand.
using AddressSource = std::function<std::vector<AddressSpec>(std::size_t count)>;

// Reads the header addresses first, then exactly as many payload addresses
// as the header announces.

inline Reception receive(Backend& backend, const AddressSource& source, int n_reads, const ReceiveOptions& opt,
                         std::vector<RankedCell>* raw = nullptr) {
  const std::size_t hc = static_cast<std::size_t>(header_cell_count(opt.class_count));
  const auto head_addrs = source(hc);
  if (head_addrs.size() < hc) throw ConfigError("fewer addresses than protocol header cells");
  MessageRead head = read_message(backend, std::span<const AddressSpec>(head_addrs).first(hc), n_reads, opt.smoothing);
  const FrameHeader h = cells_to_header(head.top1, opt.class_count);
  const std::size_t total = transmission_length(h, opt.class_count);
  std::vector<RankedCell> cells = std::move(head.cells);
  if (total > hc) {
    const auto addrs = source(total);
    if (addrs.size() < total)
      throw ConfigError("header announces " + std::to_string(total) + " cells, only " +
                        std::to_string(addrs.size()) + " addresses available");
    MessageRead rest =
        read_message(backend, std::span<const AddressSpec>(addrs).subspan(hc, total - hc), n_reads, opt.smoothing);
    cells.insert(cells.end(), std::make_move_iterator(rest.cells.begin()), std::make_move_iterator(rest.cells.end()));
  }
  Reception r = recover(std::span<const RankedCell>(cells), opt);
  if (raw) *raw = std::move(cells);
  return r;
}

inline Reception receive(Backend& backend, std::span<const AddressSpec> addresses, int n_reads,
                         const ReceiveOptions& opt, std::vector<RankedCell>* raw = nullptr) {
  const AddressSource source = [addresses](std::size_t count) {
    const auto n = std::min(count, addresses.size());
    return std::vector<AddressSpec>(addresses.begin(), addresses.begin() + static_cast<std::ptrdiff_t>(n));
  };
  return receive(backend, source, n_reads, opt, raw);
}

// ---------------------------------------------------------------------------
// Image payloads: a 6-byte preamble ('I', channels, width and height as
// big-endian u16) followed by the 3-bit quantized pixels packed MSB-first.
// With 3-bit symbols the preamble fills exactly 16 cells, so every following
// cell is one quantized pixel.
// ---------------------------------------------------------------------------
inline std::vector<std::uint8_t> image_payload(const ImageBuffer& img) {
  const auto& s = img.shape();
  if (s.width > 0xFFFF || s.height > 0xFFFF) throw ConfigError("image too large for the preamble");
  std::vector<std::uint8_t> out = {'I', static_cast<std::uint8_t>(s.channels),
                                   static_cast<std::uint8_t>(s.width >> 8), static_cast<std::uint8_t>(s.width & 0xFF),
                                   static_cast<std::uint8_t>(s.height >> 8), static_cast<std::uint8_t>(s.height & 0xFF)};
  const SymbolStream q = quantize_image(img);
  std::uint32_t acc = 0;
  int have = 0;
  for (Label v : q) {
    acc = (acc << 3) | v;
    have += 3;
    if (have >= 8) {
      have -= 8;
      out.push_back(static_cast<std::uint8_t>(acc >> have));
      acc &= (1u << have) - 1;
    }
  }
  if (have > 0) out.push_back(static_cast<std::uint8_t>(acc << (8 - have)));
  return out;
}

inline std::optional<ImageBuffer> payload_image(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 6 || bytes[0] != 'I') return std::nullopt;
  const int ch = bytes[1];
  const int w = (bytes[2] << 8) | bytes[3];
  const int h = (bytes[4] << 8) | bytes[5];
  if ((ch != 1 && ch != 3) || w == 0 || h == 0) return std::nullopt;
  const std::size_t px = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(ch);
  if (bytes.size() != 6 + (px * 3 + 7) / 8) return std::nullopt;
  SymbolStream q;
  q.reserve(px);
  std::uint32_t acc = 0;
  int have = 0;
  for (std::size_t i = 6; i < bytes.size() && q.size() < px; ++i) {
    acc = (acc << 8) | bytes[i];
    have += 8;
    while (have >= 3 && q.size() < px) {
      have -= 3;
      q.push_back(static_cast<Label>((acc >> have) & 7));
    }
    acc &= (1u << have) - 1;
  }
  return dequantize_image(q, w, h, ch);
}

// ---------------------------------------------------------------------------
// Symbol stream files: "CVTX", version, class count, bits per symbol, ecc
// block, payload bits (u64 LE), cell count (u64 LE), then one cell per
// nibble, high nibble first.
// ---------------------------------------------------------------------------
inline constexpr std::uint8_t kStreamFileVersion = 1;

struct StreamFile {
  int class_count = kDefaultClassCount;
  FrameHeader header;
  SymbolStream cells;
};

inline std::vector<std::uint8_t> serialize_stream(const StreamFile& f) {
  std::vector<std::uint8_t> out = {'C', 'V', 'T', 'X', kStreamFileVersion, static_cast<std::uint8_t>(f.class_count),
                                   static_cast<std::uint8_t>(f.header.bits_per_symbol),
                                   static_cast<std::uint8_t>(f.header.ecc_block)};
  auto put64 = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  put64(f.header.payload_bits);
  put64(f.cells.size());
  for (std::size_t i = 0; i < f.cells.size(); i += 2) {
    if (f.cells[i] > 15 || (i + 1 < f.cells.size() && f.cells[i + 1] > 15))
      throw ConfigError("cell does not fit in a nibble");
    const std::uint8_t lo = i + 1 < f.cells.size() ? f.cells[i + 1] : 0;
    out.push_back(static_cast<std::uint8_t>((f.cells[i] << 4) | lo));
  }
  return out;
}

inline StreamFile parse_stream(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kFixed = 8 + 16;
  if (bytes.size() < kFixed || bytes[0] != 'C' || bytes[1] != 'V' || bytes[2] != 'T' || bytes[3] != 'X')
    throw FramingError("not a symbol stream file");
  if (bytes[4] != kStreamFileVersion) throw FramingError("unsupported stream file version " + std::to_string(bytes[4]));
  StreamFile f;
  f.class_count = bytes[5];
  f.header.bits_per_symbol = bytes[6];
  f.header.ecc_block = bytes[7];
  auto get64 = [&](std::size_t off) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[off + static_cast<std::size_t>(i)];
    return v;
  };
  f.header.payload_bits = get64(8);
  const std::uint64_t n = get64(16);
  if (bytes.size() - kFixed != (n + 1) / 2) throw FramingError("stream file length does not match its cell count");
  f.cells.reserve(static_cast<std::size_t>(n));
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint8_t b = bytes[kFixed + static_cast<std::size_t>(i / 2)];
    f.cells.push_back(static_cast<Label>(i % 2 == 0 ? b >> 4 : b & 0xF));
  }
  return f;
}

inline void write_stream_file(const std::filesystem::path& path, const StreamFile& f) {
  write_file_bytes(path, serialize_stream(f));
}

inline StreamFile read_stream_file(const std::filesystem::path& path) { return parse_stream(read_file_bytes(path)); }

}  // namespace covertex
