#include <gtest/gtest.h>

#include <string>

#include "covertex/covertex.hpp"

using namespace covertex;

namespace {

// Remainder of M(x) * x^w modulo the generator, by plain long division.
std::uint32_t long_division(const std::vector<std::uint8_t>& bits, int w, std::uint32_t poly) {
  std::vector<int> r(bits.begin(), bits.end());
  r.resize(bits.size() + static_cast<std::size_t>(w), 0);
  std::vector<int> g(static_cast<std::size_t>(w) + 1);
  g[0] = 1;
  for (int i = 0; i < w; ++i) g[static_cast<std::size_t>(i) + 1] = (poly >> (w - 1 - i)) & 1;
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (r[i])
      for (std::size_t j = 0; j < g.size(); ++j) r[i + j] ^= g[j];
  std::uint32_t out = 0;
  for (std::size_t i = bits.size(); i < r.size(); ++i) out = (out << 1) | static_cast<std::uint32_t>(r[i]);
  return out;
}

std::vector<std::uint8_t> to_bits(const std::string& s) {
  std::vector<std::uint8_t> v;
  for (unsigned char ch : s)
    for (int i = 7; i >= 0; --i) v.push_back((ch >> i) & 1);
  return v;
}

}  // namespace

TEST(Crc12, CheckValue) { EXPECT_EQ(crc12(to_bits("123456789")), 0xF5Bu); }

TEST(Crc12, MatchesLongDivision) {
  Rng rng = make_rng(3);
  for (int t = 0; t < 500; ++t) {
    std::vector<std::uint8_t> bits(uniform_below(rng, 200));
    for (auto& b : bits) b = rng() & 1;
    ASSERT_EQ(crc12(bits), long_division(bits, 12, kCrc12Poly)) << "length " << bits.size();
  }
}

TEST(Crc12, SymbolWidthsAgreeWithBits) {
  const Crc& crc = crc12_engine();
  Rng rng = make_rng(4);
  for (int b = 1; b <= 8; ++b)
    for (int t = 0; t < 50; ++t) {
      std::vector<std::uint8_t> sym(uniform_below(rng, 20));
      std::vector<std::uint8_t> bits;
      for (auto& s : sym) {
        s = static_cast<std::uint8_t>(uniform_below(rng, 1u << b));
        for (int i = b - 1; i >= 0; --i) bits.push_back((s >> i) & 1);
      }
      ASSERT_EQ(crc.compute_symbols(sym, b), long_division(bits, 12, kCrc12Poly));
    }
}

TEST(Crc12, DetectsShortBursts) {
  Rng rng = make_rng(9);
  std::vector<std::uint8_t> bits(36);
  for (auto& b : bits) b = rng() & 1;
  const std::uint32_t ref = crc12(bits);
  for (std::size_t start = 0; start < bits.size(); ++start)
    for (int len = 1; len <= 12 && start + static_cast<std::size_t>(len) <= bits.size(); ++len)
      for (int inner = 0; inner < (1 << std::max(0, len - 2)); ++inner) {
        auto e = bits;
        e[start] ^= 1;
        if (len > 1) e[start + static_cast<std::size_t>(len) - 1] ^= 1;
        for (int i = 0; i < len - 2; ++i)
          if ((inner >> i) & 1) e[start + 1 + static_cast<std::size_t>(i)] ^= 1;
        ASSERT_NE(crc12(e), ref);
      }
}

TEST(Crc, OtherWidths) {
  // CRC-8 (poly 0x07) check value 0xF4
  EXPECT_EQ(Crc(8, 0x07).compute_bits(to_bits("123456789")), 0xF4u);
  EXPECT_THROW(Crc(0, 1), ConfigError);
}
