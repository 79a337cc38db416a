#pragma once

#include <cstdint>

#include "covertex/error.hpp"
#include "covertex/rng.hpp"

namespace covertex {

// Keyed bijection on [0, n): a balanced Feistel network over the smallest
// even-width power of two covering n, with cycle walking back into range.
class KeyedPermutation {
 public:
  KeyedPermutation(std::uint64_t n, std::uint64_t key) : n_(n), key_(key) {
    if (n == 0) throw ConfigError("permutation domain must be non-empty");
    int bits = 2;
    while (bits < 64 && (std::uint64_t{1} << bits) < n) bits += 2;
    half_ = bits / 2;
    mask_ = (std::uint64_t{1} << half_) - 1;
  }

  std::uint64_t size() const { return n_; }

  std::uint64_t operator()(std::uint64_t x) const {
    if (x >= n_) throw ConfigError("permutation input out of range");
    do x = forward(x);
    while (x >= n_);
    return x;
  }

  std::uint64_t inverse(std::uint64_t y) const {
    if (y >= n_) throw ConfigError("permutation input out of range");
    do y = backward(y);
    while (y >= n_);
    return y;
  }

 private:
  static constexpr int kRounds = 6;

  std::uint64_t round_fn(int r, std::uint64_t v) const {
    return mix64(key_ ^ mix64(v * 0x100000001B3ull + static_cast<std::uint64_t>(r))) & mask_;
  }

  std::uint64_t forward(std::uint64_t x) const {
    std::uint64_t l = x >> half_, r = x & mask_;
    for (int i = 0; i < kRounds; ++i) {
      const std::uint64_t t = l ^ round_fn(i, r);
      l = r;
      r = t;
    }
    return (l << half_) | r;
  }

  std::uint64_t backward(std::uint64_t y) const {
    std::uint64_t l = y >> half_, r = y & mask_;
    for (int i = kRounds - 1; i >= 0; --i) {
      const std::uint64_t t = r ^ round_fn(i, l);
      r = l;
      l = t;
    }
    return (l << half_) | r;
  }

  std::uint64_t n_;
  std::uint64_t key_;
  int half_ = 1;
  std::uint64_t mask_ = 1;
};

}  // namespace covertex
