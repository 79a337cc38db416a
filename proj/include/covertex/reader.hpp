#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "covertex/address_space.hpp"
#include "covertex/channel.hpp"
#include "covertex/error.hpp"
#include "covertex/symbol_codec.hpp"

namespace covertex {

inline constexpr double kDefaultSmoothing = 0.1;

// Empirical label ranking of one address. probs are non-increasing, sum to 1
// and are strictly positive after smoothing.
struct RankedCell {
  std::vector<Label> candidates;
  std::vector<double> probs;

  Label top() const { return candidates.front(); }
};

// Plurality label; ties go to the smallest label.
inline Label plurality(std::span<const std::uint32_t> counts) {
  if (counts.empty()) throw ConfigError("empty count vector");
  return static_cast<Label>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

inline Label read_majority(Backend& backend, const AddressSpec& address, int n) {
  if (n < 1) throw ConfigError("read count must be >= 1");
  const ReadObservation obs = backend.read_counts(address, n);
  return plurality(obs.counts);
}

// Additive smoothing: prob_k = (count_k + alpha) / (n + alpha * c).
inline RankedCell rank_observation(const ReadObservation& obs, double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("smoothing alpha must be positive");
  if (obs.n < 1) throw ConfigError("observation needs at least one read");
  const std::size_t c = obs.counts.size();
  if (std::accumulate(obs.counts.begin(), obs.counts.end(), std::uint64_t{0}) != obs.n)
    throw BackendError("read counts do not sum to the number of reads");

  std::vector<std::size_t> tie_pos(c);
  std::iota(tie_pos.begin(), tie_pos.end(), std::size_t{0});
  if (!obs.tie_order.empty()) {
    if (obs.tie_order.size() != c) throw BackendError("tie order does not cover the class space");
    for (std::size_t i = 0; i < c; ++i) tie_pos[obs.tie_order[i]] = i;
  }

  std::vector<Label> order(c);
  std::iota(order.begin(), order.end(), Label{0});
  std::sort(order.begin(), order.end(), [&](Label a, Label b) {
    if (obs.counts[a] != obs.counts[b]) return obs.counts[a] > obs.counts[b];
    return tie_pos[a] < tie_pos[b];
  });

  RankedCell cell;
  cell.candidates = order;
  cell.probs.reserve(c);
  const double denom = static_cast<double>(obs.n) + alpha * static_cast<double>(c);
  for (Label l : order) cell.probs.push_back((obs.counts[l] + alpha) / denom);
  return cell;
}

inline RankedCell read_ranked(Backend& backend, const AddressSpec& address, int n,
                              double alpha = kDefaultSmoothing) {
  if (n < 1) throw ConfigError("read count must be >= 1");
  return rank_observation(backend.read_counts(address, n), alpha);
}

struct MessageRead {
  SymbolStream top1;
  std::vector<RankedCell> cells;
};

inline MessageRead read_message(Backend& backend, std::span<const AddressSpec> addresses, int n,
                                double alpha = kDefaultSmoothing) {
  if (addresses.empty()) throw ConfigError("no addresses to read");
  MessageRead out;
  out.top1.reserve(addresses.size());
  out.cells.reserve(addresses.size());
  for (std::size_t i = 0; i < addresses.size(); ++i) {
    try {
      out.cells.push_back(read_ranked(backend, addresses[i], n, alpha));
    } catch (const BackendError& e) {
      throw BackendError("read of address #" + std::to_string(i) + " (" + canonical_string(addresses[i]) +
                         ") failed: " + e.what());
    }
    out.top1.push_back(out.cells.back().top());
  }
  return out;
}

}  // namespace covertex
