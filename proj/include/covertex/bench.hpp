#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <iomanip>
#include <memory>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "covertex/address_space.hpp"
#include "covertex/cec.hpp"
#include "covertex/channel.hpp"
#include "covertex/reader.hpp"
#include "covertex/reed_solomon.hpp"
#include "covertex/rng.hpp"
#include "covertex/symbol_codec.hpp"
#include "covertex/transmission.hpp"
#include "covertex/writer.hpp"

namespace covertex {

// Runs fn(i) for i in [0, n) on up to `threads` workers. Work items write to
// their own slots, so results do not depend on scheduling.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = next++; i < n; i = next++) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::string csv_number(double v) {
  std::ostringstream o;
  o << std::setprecision(10) << v;
  return o.str();
}

// ---------------------------------------------------------------------------
// CEC versus Reed-Solomon on the rank-assignment channel
// ---------------------------------------------------------------------------
struct CecVsRsParams {
  std::vector<double> top1_levels = {0.95, 0.90, 0.85, 0.80};
  std::size_t message_cells = 10000;
  int data_cells = 4;
  int trials = 8;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

struct CecVsRsRow {
  double top1 = 0.0;
  int trials = 0;
  std::size_t cells = 0;  // data cells per trial
  double cec_accuracy = 0.0;
  double rs_accuracy = 0.0;
  double avg_permutations = 0.0;           // over all blocks
  double avg_permutations_verified = 0.0;  // over verified blocks only
  double avg_crc_checks = 0.0;             // vectors without reserved labels, all blocks
  double avg_crc_checks_verified = 0.0;
  double verified_fraction = 0.0;
  double rs_failure_fraction = 0.0;
  double ser_before = 0.0;  // top-1 error on CEC data cells
  double ser_after = 0.0;
  int top_k = 0;
  int depth_limit = 0;
};

struct CecVsRsReport {
  CecVsRsParams params;
  std::vector<CecVsRsRow> rows;
};

// Probabilities the receiver attaches to rank positions: the channel's rank
// profile, with a negligible floor so that p = 1 keeps every rank possible.
inline std::vector<double> rank_profile_probs(double top1, int class_count) {
  std::vector<double> pr = rank_distribution(top1, class_count);
  constexpr double floor = 1e-12;
  for (double& v : pr) v = (v + floor) / (1.0 + floor * class_count);
  return pr;
}

namespace detail {

struct CecVsRsTrial {
  std::size_t cec_correct = 0, rs_correct = 0, top1_correct = 0, cells = 0;
  std::size_t blocks = 0, verified = 0, rs_blocks = 0, rs_failed = 0;
  double perm_sum = 0.0, perm_verified_sum = 0.0;
  double checks_sum = 0.0, checks_verified_sum = 0.0;
};

// Pushes `sent` through a fresh rank-assignment channel and returns the
// receiver's ranked view of every cell.
inline std::vector<RankedCell> rank_assignment_pass(std::span<const Label> sent, double top1, int class_count,
                                                    std::uint64_t seed, std::span<const double> probs) {
  NoisyChannelParams np;
  np.top1 = top1;
  np.class_count = class_count;
  np.mode = NoiseMode::rank_assignment;
  np.rng_seed = seed;
  NoisyChannel ch(np);
  const auto addrs = address_sequence(AddressKind::ood, derive_seed(seed, {0xADD}), sent.size());
  WriteSet ws;
  ws.entries.reserve(sent.size());
  for (std::size_t i = 0; i < sent.size(); ++i) ws.entries.push_back(WriteEntry{addrs[i], sent[i], 1});
  ch.write(ws);
  std::vector<RankedCell> out(sent.size());
  for (std::size_t i = 0; i < sent.size(); ++i) {
    out[i].candidates = ch.ranking(addrs[i]);
    out[i].probs.assign(probs.begin(), probs.end());
  }
  return out;
}

inline CecVsRsTrial cec_vs_rs_trial(double top1, const CecVsRsParams& p, std::uint64_t trial_seed) {
  constexpr int c = kDefaultClassCount;
  CecConfig cfg = select_config(top1);
  cfg.data_cells = p.data_cells;
  const auto probs = rank_profile_probs(top1, c);

  Rng rng = make_rng(trial_seed, {0xDA7A});
  SymbolStream data(p.message_cells);
  for (auto& s : data) s = static_cast<Label>(uniform_below(rng, 8));

  CecVsRsTrial t;
  t.cells = data.size();

  const SymbolStream framed = frame_with_checksums(data, cfg);
  const auto cells = rank_assignment_pass(framed, top1, c, derive_seed(trial_seed, {0xCEC}), probs);
  const MessageCorrection mc = cec_correct_message(cells, cfg, 1);
  const SymbolStream fixed = deframe(mc.symbols, cfg, data.size());
  SymbolStream top(framed.size());
  for (std::size_t i = 0; i < cells.size(); ++i) top[i] = cells[i].top();
  const SymbolStream raw = deframe(top, cfg, data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    t.cec_correct += fixed[i] == data[i];
    t.top1_correct += raw[i] == data[i];
  }
  t.blocks = mc.permutations.size();
  t.verified = mc.verified();
  for (std::size_t b = 0; b < t.blocks; ++b) {
    t.perm_sum += mc.permutations[b];
    t.checks_sum += mc.crc_checks[b];
    if (mc.status[b] == CecStatus::verified) {
      t.perm_verified_sum += mc.permutations[b];
      t.checks_verified_sum += mc.crc_checks[b];
    }
  }

  // RS(8,4): blocks of 4 data symbols, zero-padded at the end
  SymbolStream coded;
  const std::size_t rs_blocks = (data.size() + 3) / 4;
  coded.reserve(rs_blocks * 8);
  for (std::size_t b = 0; b < rs_blocks; ++b) {
    std::array<Label, 4> blk{};
    for (std::size_t i = 0; i < 4 && b * 4 + i < data.size(); ++i) blk[i] = data[b * 4 + i];
    const auto cw = rs_encode(blk);
    coded.insert(coded.end(), cw.begin(), cw.end());
  }
  const auto rs_cells = rank_assignment_pass(coded, top1, c, derive_seed(trial_seed, {0x5E5}), probs);
  t.rs_blocks = rs_blocks;
  std::array<Label, 8> rx{};
  for (std::size_t b = 0; b < rs_blocks; ++b) {
    for (std::size_t i = 0; i < 8; ++i) rx[i] = rs_cells[b * 8 + i].top();
    const auto dec = rs_decode(rx);
    t.rs_failed += !dec.ok;
    for (std::size_t i = 0; i < 4 && b * 4 + i < data.size(); ++i) t.rs_correct += dec.data[i] == data[b * 4 + i];
  }
  return t;
}

}  // namespace detail

inline CecVsRsReport bench_cec_vs_rs(const CecVsRsParams& p) {
  if (p.message_cells < 1000) throw ConfigError("message_cells must be >= 1000");
  if (p.trials < 1) throw ConfigError("trials must be >= 1");
  for (double l : p.top1_levels)
    if (!(l > 0.0 && l <= 1.0)) throw ConfigError("top-1 levels must be in (0,1]");
  const std::size_t levels = p.top1_levels.size();
  const std::size_t trials = static_cast<std::size_t>(p.trials);
  std::vector<detail::CecVsRsTrial> res(levels * trials);
  parallel_for(res.size(), p.threads, [&](std::size_t j) {
    const std::size_t li = j / trials, ti = j % trials;
    res[j] = detail::cec_vs_rs_trial(p.top1_levels[li], p, derive_seed(p.seed, {li, ti}));
  });

  CecVsRsReport rep;
  rep.params = p;
  for (std::size_t li = 0; li < levels; ++li) {
    detail::CecVsRsTrial s;
    for (std::size_t ti = 0; ti < trials; ++ti) {
      const auto& t = res[li * trials + ti];
      s.cec_correct += t.cec_correct;
      s.rs_correct += t.rs_correct;
      s.top1_correct += t.top1_correct;
      s.cells += t.cells;
      s.blocks += t.blocks;
      s.verified += t.verified;
      s.rs_blocks += t.rs_blocks;
      s.rs_failed += t.rs_failed;
      s.perm_sum += t.perm_sum;
      s.perm_verified_sum += t.perm_verified_sum;
      s.checks_sum += t.checks_sum;
      s.checks_verified_sum += t.checks_verified_sum;
    }
    CecVsRsRow row;
    row.top1 = p.top1_levels[li];
    row.trials = p.trials;
    row.cells = p.message_cells;
    const double n = static_cast<double>(s.cells);
    row.cec_accuracy = s.cec_correct / n;
    row.rs_accuracy = s.rs_correct / n;
    row.ser_before = 1.0 - s.top1_correct / n;
    row.ser_after = 1.0 - row.cec_accuracy;
    row.avg_permutations = s.perm_sum / static_cast<double>(s.blocks);
    row.avg_permutations_verified = s.verified ? s.perm_verified_sum / static_cast<double>(s.verified) : 0.0;
    row.avg_crc_checks = s.checks_sum / static_cast<double>(s.blocks);
    row.avg_crc_checks_verified = s.verified ? s.checks_verified_sum / static_cast<double>(s.verified) : 0.0;
    row.verified_fraction = static_cast<double>(s.verified) / static_cast<double>(s.blocks);
    row.rs_failure_fraction = static_cast<double>(s.rs_failed) / static_cast<double>(s.rs_blocks);
    const CecConfig cfg = select_config(row.top1);
    row.top_k = cfg.top_k;
    row.depth_limit = cfg.depth_limit;
    rep.rows.push_back(row);
  }
  return rep;
}

inline void write_csv(std::ostream& out, const CecVsRsReport& rep) {
  out << "scenario,seed,trials,cells,k,top1,top_k,depth_limit,cec_accuracy,rs_accuracy,avg_permutations,"
         "avg_permutations_verified,avg_crc_checks,avg_crc_checks_verified,verified_fraction,rs_failure_fraction,ser_before,ser_after\n";
  for (const auto& r : rep.rows)
    out << "cec-vs-rs," << rep.params.seed << ',' << r.trials << ',' << r.cells << ',' << rep.params.data_cells << ','
        << csv_number(r.top1) << ',' << r.top_k << ',' << r.depth_limit << ',' << csv_number(r.cec_accuracy) << ','
        << csv_number(r.rs_accuracy) << ',' << csv_number(r.avg_permutations) << ','
        << csv_number(r.avg_permutations_verified) << ',' << csv_number(r.avg_crc_checks) << ','
        << csv_number(r.avg_crc_checks_verified) << ',' << csv_number(r.verified_fraction) << ','
        << csv_number(r.rs_failure_fraction) << ',' << csv_number(r.ser_before) << ',' << csv_number(r.ser_after)
        << '\n';
}

// ---------------------------------------------------------------------------
// Multi-read plurality voting
// ---------------------------------------------------------------------------
enum class DistractorModel { uniform, geometric };

inline std::string_view to_string(DistractorModel m) { return m == DistractorModel::uniform ? "uniform" : "geometric"; }

inline DistractorModel parse_distractor_model(std::string_view s) {
  if (s == "uniform") return DistractorModel::uniform;
  if (s == "geometric") return DistractorModel::geometric;
  throw ConfigError("unknown distractor model '" + std::string(s) + "'");
}

struct MultireadParams {
  double top1 = 0.6;
  DistractorModel model = DistractorModel::uniform;
  std::vector<int> n_values = {1, 3, 10, 20, 50};
  std::size_t trials = 100000;
  std::uint64_t seed = 1;
  int class_count = kDefaultClassCount;
  unsigned threads = 0;
};

struct MultireadPoint {
  int n = 0;
  std::size_t trials = 0;
  std::size_t successes = 0;
  double success = 0.0;
  double std_error = 0.0;
};

struct MultireadReport {
  MultireadParams params;
  std::vector<MultireadPoint> points;
};

// Each trial draws a true label, then n reads that return it with
// probability p and a distractor otherwise; success means the plurality
// (smallest label on ties) is the true label. Uniform distractors are spread
// evenly over the other labels; geometric ones follow the rank profile over
// a per-trial random ordering of the other labels.
inline MultireadReport mc_multiread(const MultireadParams& p) {
  if (!(p.top1 > 0.0 && p.top1 <= 1.0)) throw ConfigError("p must be in (0,1]");
  if (p.class_count < 2) throw ConfigError("need at least two classes");
  if (p.trials < 1) throw ConfigError("trials must be >= 1");
  for (int n : p.n_values)
    if (n < 1) throw ConfigError("read counts must be positive");
  const int c = p.class_count;
  const auto profile = rank_distribution(p.top1, c);

  // per-n chunks of trials, so parallelism never changes which draws a trial sees
  constexpr std::size_t kChunk = 4096;
  const std::size_t chunks = (p.trials + kChunk - 1) / kChunk;
  std::vector<std::size_t> wins(p.n_values.size() * chunks, 0);
  parallel_for(wins.size(), p.threads, [&](std::size_t j) {
    const std::size_t ni = j / chunks, ci = j % chunks;
    const int n = p.n_values[ni];
    Rng rng = make_rng(p.seed, {static_cast<std::uint64_t>(n), ci});
    std::vector<std::uint32_t> counts(static_cast<std::size_t>(c));
    std::size_t w = 0;
    const std::size_t lo = ci * kChunk, hi = std::min(p.trials, lo + kChunk);
    for (std::size_t t = lo; t < hi; ++t) {
      const Label truth = static_cast<Label>(uniform_below(rng, static_cast<std::uint64_t>(c)));
      std::fill(counts.begin(), counts.end(), 0);
      std::vector<Label> ranking;
      if (p.model == DistractorModel::geometric) ranking = latent_ranking(truth, 1, c, rng);
      for (int r = 0; r < n; ++r) {
        if (uniform01(rng) < p.top1) {
          ++counts[truth];
        } else if (p.model == DistractorModel::uniform) {
          const auto k = uniform_below(rng, static_cast<std::uint64_t>(c - 1));
          ++counts[k >= truth ? k + 1 : k];
        } else {
          // rank >= 2 conditioned on not being rank 1
          double u = uniform01(rng) * (1.0 - p.top1);
          std::size_t rank = 1;
          while (rank + 1 < profile.size() && u >= profile[rank]) {
            u -= profile[rank];
            ++rank;
          }
          ++counts[ranking[rank]];
        }
      }
      w += plurality(counts) == truth;
    }
    wins[j] = w;
  });

  MultireadReport rep;
  rep.params = p;
  for (std::size_t ni = 0; ni < p.n_values.size(); ++ni) {
    MultireadPoint pt;
    pt.n = p.n_values[ni];
    pt.trials = p.trials;
    for (std::size_t ci = 0; ci < chunks; ++ci) pt.successes += wins[ni * chunks + ci];
    pt.success = static_cast<double>(pt.successes) / static_cast<double>(pt.trials);
    pt.std_error = std::sqrt(pt.success * (1.0 - pt.success) / static_cast<double>(pt.trials));
    rep.points.push_back(pt);
  }
  return rep;
}

inline void write_csv(std::ostream& out, const MultireadReport& rep) {
  out << "scenario,seed,distractors,top1,n,trials,successes,success,std_error\n";
  for (const auto& pt : rep.points)
    out << "multiread," << rep.params.seed << ',' << to_string(rep.params.model) << ',' << csv_number(rep.params.top1)
        << ',' << pt.n << ',' << pt.trials << ',' << pt.successes << ',' << csv_number(pt.success) << ','
        << csv_number(pt.std_error) << '\n';
}

// ---------------------------------------------------------------------------
// End to end: payload -> cells -> backend -> reads -> (CEC) -> payload
// ---------------------------------------------------------------------------
enum class SyntheticKind { noisy, learnable };

inline std::string_view to_string(SyntheticKind k) { return k == SyntheticKind::noisy ? "noisy" : "learnable"; }

inline SyntheticKind parse_synthetic_kind(std::string_view s) {
  if (s == "noisy" || s == "synthetic") return SyntheticKind::noisy;
  if (s == "learnable") return SyntheticKind::learnable;
  throw ConfigError("unknown synthetic backend '" + std::string(s) + "'");
}

struct EndToEndParams {
  SyntheticKind backend = SyntheticKind::noisy;
  NoisyChannelParams noisy;
  LearnableChannelParams learnable;
  std::vector<std::size_t> message_cells = {10000};
  int n_reads = 1;
  bool cec = true;
  double smoothing = kDefaultSmoothing;
  std::uint32_t samples_per_address = 20;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

struct EndToEndRow {
  std::size_t message_cells = 0;
  std::size_t transmitted_cells = 0;
  double ser_before = 0.0;
  double ser_after = 0.0;
  std::size_t errors_before = 0;
  std::size_t errors_after = 0;
  std::size_t blocks = 0;
  std::size_t verified_blocks = 0;
  double baseline_before = 1.0;
  double baseline_after = 1.0;
  std::uint64_t total_samples = 0;
  ReceptionReport reception;  // hamming, delta = 0
  bool payload_identical = false;
};

struct EndToEndReport {
  EndToEndParams params;
  std::vector<EndToEndRow> rows;
};

inline EndToEndRow end_to_end_once(const EndToEndParams& p, std::size_t cells, std::uint64_t seed) {
  // Whole bytes only; the symbol count is the smallest byte-aligned one >= cells.
  const std::size_t bytes = (cells * kDefaultBitsPerSymbol + 7) / 8;
  Rng rng = make_rng(seed, {0xB17E5});
  std::vector<std::uint8_t> payload(bytes);
  for (auto& b : payload) b = static_cast<std::uint8_t>(rng() >> 56);

  std::unique_ptr<Backend> backend;
  int c = kDefaultClassCount;
  double cfg_estimate = 1.0;
  if (p.backend == SyntheticKind::noisy) {
    NoisyChannelParams np = p.noisy;
    np.rng_seed = derive_seed(seed, {0xC4A});
    backend = std::make_unique<NoisyChannel>(np);
    c = np.class_count;
    cfg_estimate = np.top1;
  } else {
    LearnableChannelParams lp = p.learnable;
    lp.rng_seed = derive_seed(seed, {0xC4A});
    backend = std::make_unique<LearnableChannel>(lp);
    c = lp.class_count;
    cfg_estimate = 0.9;
  }
  CecConfig cfg = select_config(cfg_estimate);

  TransmitOptions to;
  to.class_count = c;
  to.ecc_block = p.cec ? cfg.data_cells : 0;
  const Transmission tx = build_transmission(payload, to);
  const auto addrs = address_sequence(AddressKind::ood, derive_seed(seed, {0xADD}), tx.cells.size());
  const TrainReport tr = backend->write(plan_static(tx.cells, addrs, StaticPolicy{p.samples_per_address}));

  ReceiveOptions ro;
  ro.class_count = c;
  ro.use_cec = p.cec;
  ro.top_k = cfg.top_k;
  ro.depth_limit = cfg.depth_limit;
  ro.threads = p.threads;
  ro.smoothing = p.smoothing;
  std::vector<RankedCell> raw;
  EndToEndRow row;
  row.message_cells = tx.data.size();
  row.transmitted_cells = tx.cells.size();
  row.baseline_before = tr.baseline_accuracy_before;
  row.baseline_after = tr.baseline_accuracy_after;
  row.total_samples = tr.total_patched_samples;
  try {
    const Reception rx = receive(*backend, addrs, p.n_reads, ro, &raw);
    row.errors_before = hamming_distance(tx.data, rx.data_uncorrected);
    row.errors_after = hamming_distance(tx.data, rx.data);
    row.reception = reception_check(tx.data, rx.data, ReceptionMetric::hamming, 0.0);
    row.payload_identical = rx.bytes == payload;
    if (rx.correction) {
      row.blocks = rx.correction->permutations.size();
      row.verified_blocks = rx.correction->verified();
    }
  } catch (const FramingError&) {
    // header destroyed by the channel: every data cell counts as lost
    row.errors_before = row.errors_after = tx.data.size();
    row.reception = ReceptionReport{ReceptionMetric::hamming, static_cast<double>(tx.data.size()), 0.0, false};
  }
  const double n = static_cast<double>(tx.data.size());
  row.ser_before = n > 0 ? row.errors_before / n : 0.0;
  row.ser_after = n > 0 ? row.errors_after / n : 0.0;
  return row;
}

inline EndToEndReport bench_end_to_end(const EndToEndParams& p) {
  if (p.n_reads < 1) throw ConfigError("n_reads must be >= 1");
  EndToEndReport rep;
  rep.params = p;
  for (std::size_t i = 0; i < p.message_cells.size(); ++i)
    rep.rows.push_back(end_to_end_once(p, p.message_cells[i], derive_seed(p.seed, {p.message_cells[i]})));
  return rep;
}

inline void write_csv(std::ostream& out, const EndToEndReport& rep) {
  out << "scenario,seed,backend,n_reads,cec,message_cells,transmitted_cells,errors_before,errors_after,ser_before,"
         "ser_after,blocks,verified_blocks,baseline_before,baseline_after,total_samples,reception_distance,accepted,"
         "payload_identical\n";
  for (const auto& r : rep.rows)
    out << "end-to-end," << rep.params.seed << ',' << to_string(rep.params.backend) << ',' << rep.params.n_reads << ','
        << (rep.params.cec ? 1 : 0) << ',' << r.message_cells << ',' << r.transmitted_cells << ',' << r.errors_before
        << ',' << r.errors_after << ',' << csv_number(r.ser_before) << ',' << csv_number(r.ser_after) << ','
        << r.blocks << ',' << r.verified_blocks << ',' << csv_number(r.baseline_before) << ','
        << csv_number(r.baseline_after) << ',' << r.total_samples << ',' << csv_number(r.reception.distance) << ','
        << (r.reception.accepted ? 1 : 0) << ',' << (r.payload_identical ? 1 : 0) << '\n';
}

}  // namespace covertex
