#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <optional>
#include <queue>
#include <span>
#include <thread>
#include <vector>

#include "covertex/crc.hpp"
#include "covertex/error.hpp"
#include "covertex/reader.hpp"
#include "covertex/symbol_codec.hpp"

namespace covertex {

struct CecConfig {
  int data_cells = 4;
  int crc_bits = 12;
  int bits_per_symbol = 3;
  int top_k = 4;
  int depth_limit = 650;
  std::uint32_t polynomial = kCrc12Poly;

  int crc_cells() const { return crc_bits / bits_per_symbol; }
  int block_cells() const { return data_cells + crc_cells(); }

  void validate() const {
    if (bits_per_symbol < 1 || bits_per_symbol > 4) throw ConfigError("bits_per_symbol must be in [1,4]");
    if (crc_bits < 1 || crc_bits > 32 || crc_bits % bits_per_symbol != 0)
      throw ConfigError("crc_bits must be a positive multiple of bits_per_symbol");
    if (data_cells < 1) throw ConfigError("data_cells must be >= 1");
    if (top_k < 1 || top_k > 15) throw ConfigError("top_k must be in [1,15]");
    if (depth_limit < 1) throw ConfigError("depth_limit must be >= 1");
    if (block_cells() > 16) throw ConfigError("a block may hold at most 16 cells");
  }
};

// Block size and search budget as a function of the measured top-1 accuracy.
inline CecConfig select_config(double top1_estimate) {
  if (!(top1_estimate > 0.0 && top1_estimate <= 1.0)) throw ConfigError("top-1 estimate must be in (0,1]");
  CecConfig c;
  if (top1_estimate >= 0.95) {
    c.data_cells = 7;
    c.depth_limit = 350;
    c.top_k = 3;
  } else if (top1_estimate >= 0.90) {
    c.data_cells = 5;
    c.depth_limit = 450;
    c.top_k = 4;
  } else {
    c.data_cells = 5;
    c.depth_limit = 650;
    c.top_k = 4;
  }
  return c;
}

inline double aliasing_probability(int crc_bits) {
  if (crc_bits < 1) throw ConfigError("crc_bits must be >= 1");
  return std::ldexp(1.0, -crc_bits);
}

inline Crc crc_for(const CecConfig& cfg) { return Crc(cfg.crc_bits, cfg.polynomial); }

inline SymbolStream checksum_cells(const Crc& crc, std::span<const Label> data, const CecConfig& cfg) {
  const std::uint32_t r = crc.compute_symbols(data, cfg.bits_per_symbol);
  const int n = cfg.crc_cells();
  const std::uint32_t mask = (1u << cfg.bits_per_symbol) - 1;
  SymbolStream out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] = static_cast<Label>((r >> ((n - 1 - i) * cfg.bits_per_symbol)) & mask);
  return out;
}

inline SymbolStream checksum_cells(std::span<const Label> data, const CecConfig& cfg) {
  return checksum_cells(crc_for(cfg), data, cfg);
}

// True when every cell is a valid symbol and the trailing cells hold the CRC
// of the leading data cells.
inline bool in_alphabet(std::span<const Label> block, const CecConfig& cfg) {
  const unsigned limit = 1u << cfg.bits_per_symbol;
  return std::all_of(block.begin(), block.end(), [&](Label s) { return s < limit; });
}

inline bool block_check(const Crc& crc, std::span<const Label> block, const CecConfig& cfg) {
  if (block.size() != static_cast<std::size_t>(cfg.block_cells()) || !in_alphabet(block, cfg)) return false;
  const auto data = block.first(static_cast<std::size_t>(cfg.data_cells));
  std::uint32_t expect = 0;
  for (Label s : block.subspan(static_cast<std::size_t>(cfg.data_cells))) expect = (expect << cfg.bits_per_symbol) | s;
  return crc.compute_symbols(data, cfg.bits_per_symbol) == expect;
}

inline bool block_check(std::span<const Label> block, const CecConfig& cfg) {
  return block_check(crc_for(cfg), block, cfg);
}

// Splits the stream into data_cells blocks (the last one zero-padded) and
// appends the checksum cells after each block.
inline SymbolStream frame_with_checksums(std::span<const Label> stream, const CecConfig& cfg) {
  cfg.validate();
  const unsigned limit = 1u << cfg.bits_per_symbol;
  const Crc crc = crc_for(cfg);
  const std::size_t k = static_cast<std::size_t>(cfg.data_cells);
  const std::size_t blocks = (stream.size() + k - 1) / k;
  SymbolStream out;
  out.reserve(blocks * static_cast<std::size_t>(cfg.block_cells()));
  SymbolStream block(k);
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t idx = b * k + i;
      const Label s = idx < stream.size() ? stream[idx] : Label{0};
      if (s >= limit) throw ConfigError("data symbol does not fit the checksum symbol width");
      block[i] = s;
    }
    out.insert(out.end(), block.begin(), block.end());
    const SymbolStream cs = checksum_cells(crc, block, cfg);
    out.insert(out.end(), cs.begin(), cs.end());
  }
  return out;
}

inline std::size_t framed_length(std::size_t data_cells, const CecConfig& cfg) {
  const std::size_t k = static_cast<std::size_t>(cfg.data_cells);
  return (data_cells + k - 1) / k * static_cast<std::size_t>(cfg.block_cells());
}

// Drops checksum cells and block padding; data_length is the unpadded length.
inline SymbolStream deframe(std::span<const Label> framed, const CecConfig& cfg, std::size_t data_length) {
  cfg.validate();
  const std::size_t n = static_cast<std::size_t>(cfg.block_cells());
  const std::size_t k = static_cast<std::size_t>(cfg.data_cells);
  if (framed.size() % n != 0) throw FramingError("framed stream is not a whole number of blocks");
  if (framed.size() != framed_length(data_length, cfg)) throw FramingError("framed stream length does not match the data length");
  SymbolStream out;
  out.reserve(data_length);
  for (std::size_t b = 0; b * n < framed.size() && out.size() < data_length; ++b)
    for (std::size_t i = 0; i < k && out.size() < data_length; ++i) out.push_back(framed[b * n + i]);
  return out;
}

struct CodedBlock {
  std::vector<RankedCell> data;
  std::vector<RankedCell> checksum;
};

enum class CecStatus { verified, exhausted_fallback };

inline std::string_view to_string(CecStatus s) { return s == CecStatus::verified ? "verified" : "exhausted-fallback"; }

struct CorrectionResult {
  SymbolStream symbols;  // data followed by checksum cells
  int permutations_tried = 0;
  int crc_checks = 0;  // tried vectors free of reserved labels
  CecStatus status = CecStatus::exhausted_fallback;
  std::vector<std::uint8_t> substitution;  // rank index chosen per cell
};

// Emits substitution vectors in order of descending joint probability, ties
// broken by the lexicographically smaller vector. Vectors are generated along
// a spanning tree of the lattice (a child increments a coordinate at or after
// the parent's last nonzero one), so every vector appears exactly once and no
// visited set is needed.
class BestFirstEnumerator {
 public:
  struct Candidate {
    std::vector<std::uint8_t> v;
    double score = 0.0;  // sum of log probabilities
  };

  BestFirstEnumerator(std::span<const RankedCell> cells, int top_k) : n_(static_cast<int>(cells.size())) {
    if (n_ < 1 || n_ > 16) throw ConfigError("enumerator supports 1..16 cells");
    if (top_k < 1 || top_k > 15) throw ConfigError("top_k must be in [1,15]");
    logp_.resize(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& c = cells[i];
      if (c.probs.empty() || c.probs.size() != c.candidates.size())
        throw ConfigError("ranked cell has no candidates");
      const std::size_t lim = std::min(c.probs.size(), static_cast<std::size_t>(top_k));
      for (std::size_t r = 0; r < lim; ++r) {
        if (!(c.probs[r] > 0.0)) throw ConfigError("ranked cell probabilities must be positive");
        if (r > 0 && c.probs[r] > c.probs[r - 1]) throw ConfigError("ranked cell probabilities must be non-increasing");
        logp_[i].push_back(std::log(c.probs[r]));
      }
    }
    heap_.push(Node{0, score(0)});
  }

  std::optional<Candidate> next() {
    if (heap_.empty()) return std::nullopt;
    const Node u = heap_.top();
    heap_.pop();
    int last = 0;
    for (int i = n_ - 1; i >= 0; --i)
      if (digit(u.key, i) != 0) {
        last = i;
        break;
      }
    for (int i = last; i < n_; ++i) {
      const unsigned d = digit(u.key, i);
      if (d + 1 < logp_[static_cast<std::size_t>(i)].size()) {
        const std::uint64_t child = u.key + (std::uint64_t{1} << shift(i));
        heap_.push(Node{child, score(child)});
      }
    }
    Candidate c;
    c.v.resize(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i) c.v[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(digit(u.key, i));
    c.score = u.score;
    return c;
  }

 private:
  // 4 bits per cell, cell 0 most significant: numeric order is lexicographic order.
  struct Node {
    std::uint64_t key;
    double score;
  };
  struct Worse {
    bool operator()(const Node& a, const Node& b) const {
      if (a.score != b.score) return a.score < b.score;
      return a.key > b.key;
    }
  };

  int shift(int i) const { return 4 * (n_ - 1 - i); }
  unsigned digit(std::uint64_t key, int i) const { return static_cast<unsigned>((key >> shift(i)) & 0xF); }

  double score(std::uint64_t key) const {
    double s = 0.0;
    for (int i = 0; i < n_; ++i) s += logp_[static_cast<std::size_t>(i)][digit(key, i)];
    return s;
  }

  int n_;
  std::vector<std::vector<double>> logp_;
  std::priority_queue<Node, std::vector<Node>, Worse> heap_;
};

inline CorrectionResult cec_correct(const Crc& crc, std::span<const RankedCell> cells, const CecConfig& cfg) {
  if (cells.size() != static_cast<std::size_t>(cfg.block_cells())) throw ConfigError("block length does not match config");
  CorrectionResult res;
  BestFirstEnumerator en(cells, cfg.top_k);
  SymbolStream trial(cells.size());
  while (res.permutations_tried < cfg.depth_limit) {
    auto cand = en.next();
    if (!cand) break;
    ++res.permutations_tried;
    for (std::size_t i = 0; i < cells.size(); ++i) trial[i] = cells[i].candidates[cand->v[i]];
    if (!in_alphabet(trial, cfg)) continue;
    ++res.crc_checks;
    if (block_check(crc, trial, cfg)) {
      res.symbols = trial;
      res.status = CecStatus::verified;
      res.substitution = std::move(cand->v);
      return res;
    }
  }
  res.symbols.resize(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) res.symbols[i] = cells[i].top();
  res.substitution.assign(cells.size(), 0);
  res.status = CecStatus::exhausted_fallback;
  return res;
}

inline CorrectionResult cec_correct(std::span<const RankedCell> cells, const CecConfig& cfg) {
  cfg.validate();
  return cec_correct(crc_for(cfg), cells, cfg);
}

inline CorrectionResult cec_correct(const CodedBlock& block, const CecConfig& cfg) {
  if (block.data.size() != static_cast<std::size_t>(cfg.data_cells) ||
      block.checksum.size() != static_cast<std::size_t>(cfg.crc_cells()))
    throw ConfigError("coded block does not match config");
  std::vector<RankedCell> cells(block.data);
  cells.insert(cells.end(), block.checksum.begin(), block.checksum.end());
  return cec_correct(cells, cfg);
}

struct MessageCorrection {
  SymbolStream symbols;  // corrected framed stream
  std::vector<int> permutations;
  std::vector<int> crc_checks;
  std::vector<CecStatus> status;

  std::size_t verified() const {
    return static_cast<std::size_t>(std::count(status.begin(), status.end(), CecStatus::verified));
  }
  double mean_permutations() const {
    if (permutations.empty()) return 0.0;
    double s = 0;
    for (int p : permutations) s += p;
    return s / static_cast<double>(permutations.size());
  }
  double mean_permutations_verified() const {
    double s = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < permutations.size(); ++i)
      if (status[i] == CecStatus::verified) {
        s += permutations[i];
        ++n;
      }
    return n ? s / static_cast<double>(n) : 0.0;
  }
};

// Corrects every block of a framed message. Blocks are split across threads
// in contiguous ranges; the result does not depend on the thread count.
inline MessageCorrection cec_correct_message(std::span<const RankedCell> cells, const CecConfig& cfg,
                                             unsigned threads = 0) {
  cfg.validate();
  const std::size_t n = static_cast<std::size_t>(cfg.block_cells());
  if (cells.size() % n != 0) throw FramingError("framed stream is not a whole number of blocks");
  const std::size_t blocks = cells.size() / n;
  MessageCorrection out;
  out.symbols.resize(cells.size());
  out.permutations.resize(blocks);
  out.crc_checks.resize(blocks);
  out.status.resize(blocks);
  const Crc crc = crc_for(cfg);

  auto work = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t b = lo; b < hi; ++b) {
      const CorrectionResult r = cec_correct(crc, cells.subspan(b * n, n), cfg);
      std::copy(r.symbols.begin(), r.symbols.end(), out.symbols.begin() + static_cast<std::ptrdiff_t>(b * n));
      out.permutations[b] = r.permutations_tried;
      out.crc_checks[b] = r.crc_checks;
      out.status[b] = r.status;
    }
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(blocks, 1)));
  if (threads <= 1) {
    work(0, blocks);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  const std::size_t per = (blocks + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t lo = t * per, hi = std::min(blocks, lo + per);
    if (lo >= hi) break;
    pool.emplace_back([&, t, lo, hi] {
      try {
        work(lo, hi);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace covertex
