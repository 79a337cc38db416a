#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "covertex/error.hpp"

namespace covertex {

// MSB-first, non-reflected CRC with zero initial register and no final XOR,
// over arbitrary bit strings. Bits are consumed through per-chunk-width
// lookup tables (chunks of 1..8 bits), so symbol streams of any width can be
// fed without repacking.
class Crc {
 public:
  Crc(int width, std::uint32_t poly) : width_(width), poly_(poly) {
    if (width < 1 || width > 32) throw ConfigError("CRC width must be in [1,32]");
    mask_ = width == 32 ? 0xFFFFFFFFu : ((1u << width) - 1);
    poly_ &= mask_;
    max_chunk_ = width < 8 ? width : 8;
    for (int w = 1; w <= max_chunk_; ++w)
      for (unsigned v = 0; v < (1u << w); ++v) tables_[static_cast<std::size_t>(w)][v] = feed_bitwise(0, v, w);
  }

  int width() const { return width_; }
  std::uint32_t polynomial() const { return poly_; }

  // Feeds `nbits` (1..8) low bits of `value`, most significant first.
  std::uint32_t update(std::uint32_t reg, std::uint32_t value, int nbits) const {
    while (nbits > max_chunk_) {
      const int rest = nbits - max_chunk_;
      reg = update_chunk(reg, (value >> rest) & ((1u << max_chunk_) - 1), max_chunk_);
      nbits = rest;
    }
    return update_chunk(reg, value & ((1u << nbits) - 1), nbits);
  }

  // Bits given one per element (0 or 1).
  std::uint32_t compute_bits(std::span<const std::uint8_t> bits) const {
    std::uint32_t reg = 0;
    std::size_t i = 0;
    for (; i + 8 <= bits.size(); i += 8) {
      std::uint32_t v = 0;
      for (std::size_t j = 0; j < 8; ++j) v = (v << 1) | (bits[i + j] & 1u);
      reg = update(reg, v, 8);
    }
    for (; i < bits.size(); ++i) reg = update(reg, bits[i] & 1u, 1);
    return reg;
  }

  // Each symbol contributes its low `bits_per_symbol` bits, MSB first.
  std::uint32_t compute_symbols(std::span<const std::uint8_t> symbols, int bits_per_symbol) const {
    if (bits_per_symbol < 1 || bits_per_symbol > 8) throw ConfigError("symbol width must be in [1,8]");
    std::uint32_t reg = 0;
    for (std::uint8_t s : symbols) reg = update(reg, s, bits_per_symbol);
    return reg;
  }

 private:
  std::uint32_t update_chunk(std::uint32_t reg, std::uint32_t v, int w) const {
    const std::uint32_t idx = ((reg >> (width_ - w)) ^ v) & ((1u << w) - 1);
    const std::uint32_t shifted = w >= 32 ? 0 : ((reg << w) & mask_);
    return shifted ^ tables_[static_cast<std::size_t>(w)][idx];
  }

  std::uint32_t feed_bitwise(std::uint32_t reg, std::uint32_t v, int w) const {
    for (int i = w - 1; i >= 0; --i) {
      const std::uint32_t top = ((reg >> (width_ - 1)) ^ (v >> i)) & 1u;
      reg = (reg << 1) & mask_;
      if (top) reg ^= poly_;
    }
    return reg;
  }

  int width_;
  std::uint32_t poly_;
  std::uint32_t mask_ = 0;
  int max_chunk_ = 8;
  std::array<std::array<std::uint32_t, 256>, 9> tables_{};
};

inline constexpr std::uint32_t kCrc12Poly = 0x80F;  // x^12 + x^11 + x^3 + x^2 + x + 1

inline const Crc& crc12_engine() {
  static const Crc engine(12, kCrc12Poly);
  return engine;
}

inline std::uint32_t crc12(std::span<const std::uint8_t> bits) { return crc12_engine().compute_bits(bits); }

}  // namespace covertex
