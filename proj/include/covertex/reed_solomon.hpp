#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "covertex/error.hpp"
#include "covertex/galois.hpp"

namespace covertex {

// Systematic Reed-Solomon evaluation code RS(N, K) over a binary extension
// field. Codeword position i holds f(x_i) for a message polynomial f of
// degree < K, with evaluation points alpha^0, ..., alpha^(q-2) followed by 0,
// so N may reach the field order q (the singly-extended length). The first K
// positions carry the data unchanged.
//
// Decoding is Berlekamp-Welch bounded-distance decoding: up to
// t = (N - K) / 2 symbol errors are corrected; anything else is flagged.
template <class Field, int N, int K>
class ReedSolomon {
  static_assert(K >= 1 && K < N && N <= Field::kOrder);

 public:
  using Element = typename Field::Element;
  static constexpr int kLength = N;
  static constexpr int kDataLength = K;
  static constexpr int kParity = N - K;
  static constexpr int kCorrectable = (N - K) / 2;

  struct DecodeResult {
    std::vector<Element> data;      // corrected data, or the received data on failure
    std::vector<Element> codeword;  // corrected codeword (empty on failure)
    int corrected = 0;              // symbol positions changed
    bool ok = false;
  };

  ReedSolomon() {
    for (int i = 0; i < N; ++i) points_[static_cast<std::size_t>(i)] = i < Field::kMul ? Field::alpha_pow(i) : 0;
    // parity_[p][j] = L_j(x_{K+p}), Lagrange basis over the data points
    for (int p = 0; p < N - K; ++p) {
      const Element x = points_[static_cast<std::size_t>(K + p)];
      for (int j = 0; j < K; ++j) {
        Element num = 1, den = 1;
        for (int m = 0; m < K; ++m) {
          if (m == j) continue;
          num = Field::mul(num, Field::sub(x, points_[static_cast<std::size_t>(m)]));
          den = Field::mul(den, Field::sub(points_[static_cast<std::size_t>(j)], points_[static_cast<std::size_t>(m)]));
        }
        parity_[static_cast<std::size_t>(p)][static_cast<std::size_t>(j)] = Field::div(num, den);
      }
    }
  }

  const std::array<Element, N>& evaluation_points() const { return points_; }

  std::vector<Element> encode(std::span<const Element> data) const {
    if (data.size() != static_cast<std::size_t>(K)) throw ConfigError("RS encode expects exactly K data symbols");
    std::vector<Element> cw(data.begin(), data.end());
    for (Element d : data)
      if (d >= Field::kOrder) throw ConfigError("RS data symbol outside the field");
    for (int p = 0; p < N - K; ++p) {
      Element acc = 0;
      for (int j = 0; j < K; ++j)
        acc = Field::add(acc, Field::mul(parity_[static_cast<std::size_t>(p)][static_cast<std::size_t>(j)],
                                         data[static_cast<std::size_t>(j)]));
      cw.push_back(acc);
    }
    return cw;
  }

  // Received values outside the field (reserved labels) are decoded as 0;
  // on failure the data part is returned exactly as received.
  DecodeResult decode(std::span<const Element> received) const {
    if (received.size() != static_cast<std::size_t>(N)) throw ConfigError("RS decode expects exactly N symbols");
    DecodeResult out;
    out.data.assign(received.begin(), received.begin() + K);

    std::array<Element, N> y{};
    for (int i = 0; i < N; ++i) {
      const Element r = received[static_cast<std::size_t>(i)];
      y[static_cast<std::size_t>(i)] = r < Field::kOrder ? r : 0;
    }

    const auto f = berlekamp_welch(y);
    if (!f) return out;

    std::vector<Element> cw(static_cast<std::size_t>(N));
    int dist = 0;
    for (int i = 0; i < N; ++i) {
      cw[static_cast<std::size_t>(i)] = eval(*f, points_[static_cast<std::size_t>(i)]);
      dist += cw[static_cast<std::size_t>(i)] != received[static_cast<std::size_t>(i)];
    }
    if (dist > kCorrectable) return out;
    out.ok = true;
    out.corrected = dist;
    out.data.assign(cw.begin(), cw.begin() + K);
    out.codeword = std::move(cw);
    return out;
  }

 private:
  using Poly = std::vector<Element>;  // coefficients, lowest degree first

  static Element eval(const Poly& p, Element x) {
    Element acc = 0;
    for (auto it = p.rbegin(); it != p.rend(); ++it) acc = Field::add(Field::mul(acc, x), *it);
    return acc;
  }

  // Solves Q(x_i) = y_i E(x_i) with E monic of degree t and deg Q < K + t,
  // then returns Q / E if the division is exact.
  std::optional<Poly> berlekamp_welch(const std::array<Element, N>& y) const {
    constexpr int t = kCorrectable;
    constexpr int nq = K + t;
    constexpr int cols = nq + t;
    std::array<std::array<Element, cols + 1>, N> a{};
    for (int i = 0; i < N; ++i) {
      const Element x = points_[static_cast<std::size_t>(i)];
      const Element yi = y[static_cast<std::size_t>(i)];
      auto& row = a[static_cast<std::size_t>(i)];
      Element xp = 1;
      for (int j = 0; j < nq; ++j) {
        row[static_cast<std::size_t>(j)] = xp;
        if (j < t) row[static_cast<std::size_t>(nq + j)] = Field::mul(yi, xp);
        xp = Field::mul(xp, x);
      }
      row[cols] = Field::mul(yi, Field::pow(x, t));
    }

    // Gaussian elimination; free variables are set to zero.
    std::array<int, cols> pivot_row{};
    pivot_row.fill(-1);
    int r = 0;
    for (int c = 0; c < cols && r < N; ++c) {
      int p = r;
      while (p < N && a[static_cast<std::size_t>(p)][static_cast<std::size_t>(c)] == 0) ++p;
      if (p == N) continue;
      std::swap(a[static_cast<std::size_t>(p)], a[static_cast<std::size_t>(r)]);
      const Element inv = Field::inv(a[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]);
      for (auto& v : a[static_cast<std::size_t>(r)]) v = Field::mul(v, inv);
      for (int i = 0; i < N; ++i) {
        if (i == r) continue;
        const Element f = a[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
        if (f == 0) continue;
        for (int j = 0; j <= cols; ++j)
          a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
              Field::sub(a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)],
                         Field::mul(f, a[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)]));
      }
      pivot_row[static_cast<std::size_t>(c)] = r++;
    }
    for (int i = r; i < N; ++i)
      if (a[static_cast<std::size_t>(i)][cols] != 0) return std::nullopt;  // inconsistent

    std::array<Element, cols> sol{};
    for (int c = 0; c < cols; ++c)
      if (pivot_row[static_cast<std::size_t>(c)] >= 0)
        sol[static_cast<std::size_t>(c)] = a[static_cast<std::size_t>(pivot_row[static_cast<std::size_t>(c)])][cols];

    Poly q(sol.begin(), sol.begin() + nq);
    Poly e(sol.begin() + nq, sol.end());
    e.push_back(1);

    // long division q / e (e monic)
    Poly quot(static_cast<std::size_t>(nq - t), 0);
    for (int d = nq - 1; d >= t; --d) {
      const Element coef = q[static_cast<std::size_t>(d)];
      if (coef == 0) continue;
      quot[static_cast<std::size_t>(d - t)] = coef;
      for (int j = 0; j <= t; ++j)
        q[static_cast<std::size_t>(d - t + j)] =
            Field::sub(q[static_cast<std::size_t>(d - t + j)], Field::mul(coef, e[static_cast<std::size_t>(j)]));
    }
    for (int d = 0; d < t; ++d)
      if (q[static_cast<std::size_t>(d)] != 0) return std::nullopt;
    return quot;
  }

  std::array<Element, N> points_{};
  std::array<std::array<Element, K>, N - K> parity_{};
};

// (8,4) code over GF(8): 4 data cells, 4 parity cells, corrects 2 errors.
using Rs84 = ReedSolomon<GF8, 8, 4>;

inline const Rs84& rs84() {
  static const Rs84 code;
  return code;
}

inline std::vector<std::uint8_t> rs_encode(std::span<const std::uint8_t> data) { return rs84().encode(data); }

inline Rs84::DecodeResult rs_decode(std::span<const std::uint8_t> received) { return rs84().decode(received); }

}  // namespace covertex
