#pragma once

#include <array>
#include <cstdint>

#include "covertex/error.hpp"

namespace covertex {

namespace detail {

template <int M>
struct GfTables {
  std::array<std::uint8_t, 2 * (1 << M)> exp{};
  std::array<int, (1 << M)> log{};
};

template <int M, unsigned Prim>
constexpr GfTables<M> build_gf_tables() {
  constexpr int order = 1 << M;
  GfTables<M> t;
  unsigned x = 1;
  for (int i = 0; i < order - 1; ++i) {
    t.exp[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(x);
    t.log[x] = i;
    x <<= 1;
    if (x & static_cast<unsigned>(order)) x ^= Prim;
  }
  for (int i = order - 1; i < 2 * order; ++i)
    t.exp[static_cast<std::size_t>(i)] = t.exp[static_cast<std::size_t>(i - (order - 1))];
  return t;
}

template <int M, unsigned Prim>
inline constexpr GfTables<M> gf_tables = build_gf_tables<M, Prim>();

}  // namespace detail

// GF(2^M) with log/antilog tables built at compile time. Prim is the
// primitive polynomial including the x^M term (0b1011 = x^3 + x + 1).
template <int M, unsigned Prim>
class GaloisField {
  static_assert(M >= 2 && M <= 8);
  static constexpr const detail::GfTables<M>& t = detail::gf_tables<M, Prim>;

 public:
  using Element = std::uint8_t;
  static constexpr int kOrder = 1 << M;
  static constexpr int kMul = kOrder - 1;  // multiplicative group order

  static constexpr Element add(Element a, Element b) { return a ^ b; }
  static constexpr Element sub(Element a, Element b) { return a ^ b; }

  static constexpr Element mul(Element a, Element b) {
    if (a == 0 || b == 0) return 0;
    return t.exp[static_cast<std::size_t>(t.log[a] + t.log[b])];
  }

  static Element inv(Element a) {
    if (a == 0) throw ConfigError("inverse of zero in GF(2^m)");
    return t.exp[static_cast<std::size_t>(kMul - t.log[a])];
  }

  static Element div(Element a, Element b) { return mul(a, inv(b)); }

  // alpha^e for any e >= 0
  static constexpr Element alpha_pow(int e) { return t.exp[static_cast<std::size_t>(e % kMul)]; }

  static constexpr Element pow(Element a, int e) {
    if (e == 0) return 1;
    if (a == 0) return 0;
    return t.exp[static_cast<std::size_t>((t.log[a] * e) % kMul)];
  }
};

using GF8 = GaloisField<3, 0b1011>;
using GF16 = GaloisField<4, 0b10011>;

}  // namespace covertex
