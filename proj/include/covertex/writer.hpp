#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "covertex/address_space.hpp"
#include "covertex/channel.hpp"
#include "covertex/error.hpp"
#include "covertex/reader.hpp"
#include "covertex/symbol_codec.hpp"

namespace covertex {

struct StaticPolicy {
  std::uint32_t samples_per_address = 20;
};

struct DynamicPolicy {
  std::uint32_t initial_samples = 5;
  std::uint32_t increment = 5;
  std::uint32_t max_per_address = 160;
  int plateau_window = 3;
  int round_epochs = 1;
  int verify_reads = 1;

  void validate() const {
    if (initial_samples == 0 || increment == 0) throw ConfigError("dynamic policy sample counts must be positive");
    if (max_per_address < initial_samples) throw ConfigError("per-address max must be >= initial samples");
    if (plateau_window < 1 || round_epochs < 1 || verify_reads < 1)
      throw ConfigError("dynamic policy window, epochs and reads must be positive");
  }
};

inline void check_enough_addresses(std::size_t symbols, std::size_t addresses) {
  if (addresses < symbols)
    throw ConfigError("need " + std::to_string(symbols) + " addresses, have " + std::to_string(addresses));
}

inline WriteSet plan_static(std::span<const Label> symbols, std::span<const AddressSpec> addresses,
                            const StaticPolicy& policy = {}) {
  if (policy.samples_per_address < 1) throw ConfigError("samples_per_address must be >= 1");
  check_enough_addresses(symbols.size(), addresses.size());
  WriteSet ws;
  ws.entries.reserve(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i)
    ws.entries.push_back(WriteEntry{addresses[i], symbols[i], policy.samples_per_address});
  return ws;
}

// Indices i where the plurality of n_reads reads differs from expected[i].
inline std::vector<std::size_t> verify(Backend& backend, std::span<const AddressSpec> addresses,
                                       std::span<const Label> expected, int n_reads = 1) {
  if (addresses.size() != expected.size()) throw ConfigError("address and symbol counts differ");
  std::vector<std::size_t> failing;
  for (std::size_t i = 0; i < addresses.size(); ++i)
    if (read_majority(backend, addresses[i], n_reads) != expected[i]) failing.push_back(i);
  return failing;
}

struct RoundRecord {
  int round = 0;
  std::uint64_t total_samples = 0;
  std::size_t written_entries = 0;
  std::size_t failing = 0;
  double accuracy = 0.0;
  TrainReport train;
};

enum class StopReason { all_verified, per_address_max, plateau };

inline std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::all_verified: return "all-verified";
    case StopReason::per_address_max: return "per-address-max";
    case StopReason::plateau: return "plateau";
  }
  return "?";
}

struct DynamicResult {
  WriteSet final_set;
  std::vector<RoundRecord> history;
  std::vector<std::size_t> unresolved;
  StopReason stop = StopReason::all_verified;

  double final_accuracy() const { return history.empty() ? 0.0 : history.back().accuracy; }
};

// Round 0 writes initial_samples for every address; each later round adds
// `increment` samples to every address that failed verification and writes
// only those entries. Stops when everything verifies, when every failing
// address is at the cap, or when verification accuracy has not improved for
// plateau_window consecutive rounds.
inline DynamicResult write_dynamic(Backend& backend, std::span<const Label> symbols,
                                   std::span<const AddressSpec> addresses, const DynamicPolicy& policy = {}) {
  policy.validate();
  if (!backend.supports_incremental_write()) throw BackendError("backend does not support incremental writes");
  check_enough_addresses(symbols.size(), addresses.size());
  const std::size_t n = symbols.size();
  const auto addrs = addresses.first(n);

  DynamicResult out;
  std::vector<std::uint32_t> counts(n, policy.initial_samples);
  if (n == 0) return out;

  WriteSet round_set;
  for (std::size_t i = 0; i < n; ++i) round_set.entries.push_back(WriteEntry{addrs[i], symbols[i], counts[i]});

  backend.set_epochs(policy.round_epochs);
  double best = -1.0;
  int stale = 0;
  for (int round = 0;; ++round) {
    RoundRecord rec;
    rec.round = round;
    rec.written_entries = round_set.entries.size();
    rec.train = backend.write(round_set);
    std::vector<std::size_t> failing = verify(backend, addrs, symbols, policy.verify_reads);
    rec.failing = failing.size();
    rec.accuracy = 1.0 - static_cast<double>(failing.size()) / static_cast<double>(n);
    for (auto c : counts) rec.total_samples += c;
    out.history.push_back(rec);

    if (failing.empty()) {
      out.stop = StopReason::all_verified;
      break;
    }
    if (rec.accuracy > best) {
      best = rec.accuracy;
      stale = 0;
    } else if (++stale >= policy.plateau_window) {
      out.stop = StopReason::plateau;
      out.unresolved = std::move(failing);
      break;
    }

    round_set.entries.clear();
    for (std::size_t i : failing) {
      if (counts[i] >= policy.max_per_address) continue;
      counts[i] = std::min(policy.max_per_address, counts[i] + policy.increment);
      round_set.entries.push_back(WriteEntry{addrs[i], symbols[i], counts[i]});
    }
    if (round_set.entries.empty()) {
      out.stop = StopReason::per_address_max;
      out.unresolved = std::move(failing);
      break;
    }
  }

  for (std::size_t i = 0; i < n; ++i) out.final_set.entries.push_back(WriteEntry{addrs[i], symbols[i], counts[i]});
  return out;
}

}  // namespace covertex
