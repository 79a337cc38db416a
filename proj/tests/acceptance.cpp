// Acceptance run: one PASS/FAIL line per criterion, details indented below.
// Exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "covertex/covertex.hpp"

using namespace covertex;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void verdict(bool ok, const std::string& name, const std::string& summary) {
  std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << summary << std::endl;
  if (!ok) ++failures;
}

void detail(const std::string& line) { std::cout << "    " << line << '\n'; }

std::string fmt(double v, int prec = 2) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(prec) << v;
  return o.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

unsigned worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

// ---------------------------------------------------------------------------
void table5() {
  const auto t0 = std::chrono::steady_clock::now();
  CecVsRsParams p;
  p.message_cells = 10000;
  p.data_cells = 4;
  p.trials = 8;
  p.seed = 1;
  p.threads = worker_count();
  const CecVsRsReport rep = bench_cec_vs_rs(p);
  const double runtime = seconds_since(t0);

  const double cec_target[] = {98.23, 96.87, 94.10, 90.22};
  const double rs_target[] = {96.81, 92.87, 88.05, 83.26};
  const double perm_target[] = {4.69, 18.82, 41.51, 58.01};
  bool cec_ok = true, rs_ok = true, order_ok = true, perm_all_ok = true, perm_verified_ok = true;
  detail("top1  cec%   (target)  rs%    (target)  perms(all) perms(verified) (target)  crc_checks  verified%");
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    const auto& r = rep.rows[i];
    const double cec = 100 * r.cec_accuracy, rs = 100 * r.rs_accuracy;
    const bool c = std::abs(cec - cec_target[i]) <= 1.0;
    const bool s = std::abs(rs - rs_target[i]) <= 1.0;
    const bool pa = std::abs(r.avg_permutations - perm_target[i]) <= 0.25 * perm_target[i];
    const bool pv = std::abs(r.avg_permutations_verified - perm_target[i]) <= 0.25 * perm_target[i];
    cec_ok &= c;
    rs_ok &= s;
    order_ok &= cec > rs;
    perm_all_ok &= pa;
    perm_verified_ok &= pv;
    detail(fmt(r.top1) + "  " + fmt(cec) + (c ? "  " : "* ") + "(" + fmt(cec_target[i]) + ")  " + fmt(rs) +
           (s ? "  " : "* ") + "(" + fmt(rs_target[i]) + ")  " + fmt(r.avg_permutations) + (pa ? "  " : "* ") +
           "     " + fmt(r.avg_permutations_verified) + (pv ? "  " : "* ") + "        (" + fmt(perm_target[i]) +
           ")    " + fmt(r.avg_crc_checks) + "      " + fmt(100 * r.verified_fraction));
  }
  detail("(* outside tolerance; " + std::to_string(p.trials) + " trials x " + std::to_string(p.message_cells) +
         " cells per level, runtime " + fmt(runtime, 1) + " s)");
  verdict(cec_ok && rs_ok && order_ok && (perm_all_ok || perm_verified_ok) && runtime < 120, "table5",
          std::string("cec ") + (cec_ok ? "ok" : "off") + ", rs " + (rs_ok ? "ok" : "off") + ", cec>rs " +
              (order_ok ? "ok" : "off") + ", permutations all-blocks " + (perm_all_ok ? "ok" : "off") +
              " / verified-only " + (perm_verified_ok ? "ok" : "off") + ", runtime " + fmt(runtime, 1) + " s");
}

// ---------------------------------------------------------------------------
void codec() {
  Rng rng = make_rng(2024, {0xC0DEC});
  constexpr std::size_t kMiB = std::size_t{1} << 20;
  std::size_t bad = 0, largest = 0;
  std::vector<std::uint8_t> payload;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = t == 0 ? 0 : t == 1 ? kMiB : static_cast<std::size_t>(uniform_below(rng, kMiB + 1));
    payload.resize(n);
    for (auto& b : payload) b = static_cast<std::uint8_t>(rng() >> 56);
    const int bits = 1 + t % 3;
    const MessageFrame f = encode_bits(payload, bits);
    bad += decode_bits(f) != payload;
    largest = std::max(largest, n);
  }
  int max_err = 0;
  for (int p = 0; p < 256; ++p)
    max_err = std::max(max_err, std::abs(int(dequantize_pixel(quantize_pixel(static_cast<std::uint8_t>(p)))) - p));
  detail("1000 payloads, largest " + std::to_string(largest) + " bytes, " + std::to_string(bad) + " mismatches");
  detail("max quantization error over [0,255]: " + std::to_string(max_err));
  verdict(bad == 0 && largest == kMiB && max_err <= 16, "codec-roundtrip",
          std::to_string(1000 - bad) + "/1000 identical, max pixel error " + std::to_string(max_err));
}

// ---------------------------------------------------------------------------
struct Scored {
  std::vector<std::uint8_t> v;
  double score;
};

std::vector<Scored> exhaustive_order(const std::vector<RankedCell>& cells, int top_k) {
  std::vector<Scored> all;
  std::vector<std::uint8_t> v(cells.size(), 0);
  for (bool more = true; more;) {
    double s = 0;
    for (std::size_t i = 0; i < cells.size(); ++i) s += std::log(cells[i].probs[v[i]]);
    all.push_back({v, s});
    more = false;
    for (std::size_t i = cells.size(); i-- > 0;) {
      if (++v[i] < top_k) {
        more = true;
        break;
      }
      v[i] = 0;
    }
  }
  std::stable_sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.v < b.v;
  });
  return all;
}

void cec_oracle() {
  Rng rng = make_rng(77, {0x0AC1E});
  std::size_t blocks = 0, mismatched = 0, vectors = 0;
  for (int t = 0; t < 10000; ++t) {
    const int k = 1 + t % 3;
    const int top_k = 1 + (t / 3) % 3;
    const int n = k + 4;  // data cells plus four CRC-12 cells
    std::vector<RankedCell> cells;
    for (int i = 0; i < n; ++i) {
      RankedCell c;
      for (int l = 0; l < 10; ++l) c.candidates.push_back(static_cast<Label>(l));
      for (int l = 9; l > 0; --l) std::swap(c.candidates[static_cast<std::size_t>(l)], c.candidates[uniform_below(rng, l + 1)]);
      std::vector<double> w(10);
      // every other block draws from a small set of weights so ties occur
      for (auto& x : w) x = t % 2 ? uniform01(rng) + 1e-3 : static_cast<double>(1 + uniform_below(rng, 3));
      std::sort(w.rbegin(), w.rend());
      double s = 0;
      for (double x : w) s += x;
      for (double x : w) c.probs.push_back(x / s);
      cells.push_back(std::move(c));
    }
    const auto want = exhaustive_order(cells, top_k);
    BestFirstEnumerator en(cells, top_k);
    bool same = true;
    for (const auto& w : want) {
      const auto got = en.next();
      if (!got || got->v != w.v || got->score != w.score) {
        same = false;
        break;
      }
    }
    same &= !en.next().has_value();
    ++blocks;
    vectors += want.size();
    mismatched += !same;
  }
  detail(std::to_string(blocks) + " blocks (k=1..3 data cells + 4 CRC cells, topK=1..3), " + std::to_string(vectors) +
         " vectors compared");
  verdict(mismatched == 0, "cec-oracle",
          std::to_string(blocks - mismatched) + "/" + std::to_string(blocks) + " blocks in exact exhaustive order");
}

// ---------------------------------------------------------------------------
void rs_exhaustive() {
  Rng rng = make_rng(5, {0x5E5});
  std::size_t patterns = 0, wrong = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<std::uint8_t> d(4);
    for (auto& s : d) s = static_cast<std::uint8_t>(uniform_below(rng, 8));
    const auto cw = rs_encode(d);
    for (int i = -1; i < 8; ++i)
      for (int j = i + 1; j < 8; ++j)
        for (int ei = (i < 0 ? 0 : 1); ei < (i < 0 ? 1 : 8); ++ei)
          for (int ej = 1; ej < 8; ++ej) {
            auto rx = cw;
            if (i >= 0) rx[static_cast<std::size_t>(i)] ^= static_cast<std::uint8_t>(ei);
            rx[static_cast<std::size_t>(j)] ^= static_cast<std::uint8_t>(ej);
            const auto r = rs_decode(rx);
            ++patterns;
            wrong += !(r.ok && r.data == d && r.codeword == cw);
          }
    const auto clean = rs_decode(cw);
    ++patterns;
    wrong += !(clean.ok && clean.data == d && clean.corrected == 0);
  }
  detail("100 codewords x 1429 error patterns (0, 1 or 2 symbol errors)");
  verdict(wrong == 0, "rs-exhaustive",
          std::to_string(patterns - wrong) + "/" + std::to_string(patterns) + " patterns decoded exactly");
}

// ---------------------------------------------------------------------------
void crc_aliasing() {
  CecConfig cfg;
  cfg.data_cells = 4;
  const Crc crc = crc_for(cfg);
  Rng rng = make_rng(12, {0xA11A5});
  constexpr std::size_t kTrials = 1000000;
  std::size_t passes = 0;
  SymbolStream data(4), other(8);
  for (std::size_t t = 0; t < kTrials; ++t) {
    for (auto& s : data) s = static_cast<Label>(uniform_below(rng, 8));
    const SymbolStream sent = frame_with_checksums(data, cfg);
    do
      for (auto& s : other) s = static_cast<Label>(uniform_below(rng, 8));
    while (other == sent);
    passes += block_check(crc, other, cfg);
  }
  const double p = aliasing_probability(12);
  const double rate = static_cast<double>(passes) / kTrials;
  const double sigma = std::sqrt(p * (1 - p) / kTrials);
  detail("passes " + std::to_string(passes) + " of " + std::to_string(kTrials) + ", expected " + fmt(p * kTrials, 1) +
         " +- " + fmt(3 * sigma * kTrials, 1) + " (3 sigma)");
  verdict(std::abs(rate - p) <= 3 * sigma, "crc-aliasing",
          "rate " + fmt(rate * 1e4, 3) + "e-4 vs 2^-12 = " + fmt(p * 1e4, 3) + "e-4");
}

// ---------------------------------------------------------------------------
std::vector<std::uint8_t> slurp(const fs::path& p) { return read_file_bytes(p); }

void addresses() {
  bool counts_ok = true;
  for (int patches : {1, 2}) {
    const std::uint64_t n = address_count(AddressKind::covert, patches);
    std::set<std::tuple<std::vector<int>, std::vector<int>, int>> distinct;
    for (const auto& a : address_sequence(AddressKind::covert, 0xACCE55, n, patches)) {
      const auto p = covert_pattern(a);
      distinct.insert({p.locations, p.patterns, p.background_class});
    }
    const std::uint64_t want = patches == 1 ? 800 : 28000;
    counts_ok &= n == want && distinct.size() == want;
    detail(std::to_string(patches) + "-patch: " + std::to_string(n) + " addresses, " + std::to_string(distinct.size()) +
           " distinct");
  }

  const fs::path dir = fs::temp_directory_path() / ("covertex_accept_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::vector<std::string> addrs = {
      canonical_string(gen_address(AddressKind::covert, 3, 0, 2)),
      canonical_string(gen_address(AddressKind::covert, 3, 27999, 2)),
      canonical_string(gen_address(AddressKind::covert, 9, 411, 1)),
      canonical_string(gen_address(AddressKind::ood, 3, 123456789)),
  };
  bool render_ok = true;
  for (std::size_t i = 0; i < addrs.size(); ++i) {
    std::vector<std::uint8_t> out[2];
    for (int run = 0; run < 2; ++run) {
      const fs::path f = dir / ("r" + std::to_string(i) + "_" + std::to_string(run) + ".pgm");
      const std::string cmd = std::string("\"") + COVERTEX_CLI + "\" render --address " + addrs[i] + " --out \"" +
                              f.string() + "\"";
      if (std::system(cmd.c_str()) != 0) {
        render_ok = false;
        continue;
      }
      out[run] = slurp(f);
    }
    render_ok &= !out[0].empty() && out[0] == out[1];
  }
  fs::remove_all(dir);
  detail(std::to_string(addrs.size()) + " addresses rendered by two separate processes");
  verdict(counts_ok && render_ok, "address-space",
          std::string("counts ") + (counts_ok ? "exact" : "wrong") + ", render " +
              (render_ok ? "byte-identical" : "differs"));
}

// ---------------------------------------------------------------------------
double exact_plurality_success(double p, int c, int n) {
  const double q = (1.0 - p) / (c - 1);
  double total = 0;
  std::vector<std::uint32_t> counts(static_cast<std::size_t>(c));
  for (int truth = 0; truth < c; ++truth) {
    std::vector<int> seq(static_cast<std::size_t>(n), 0);
    for (bool more = true; more;) {
      double pr = 1;
      std::fill(counts.begin(), counts.end(), 0);
      for (int r : seq) {
        pr *= r == truth ? p : q;
        ++counts[static_cast<std::size_t>(r)];
      }
      if (plurality(counts) == truth) total += pr;
      more = false;
      for (std::size_t i = seq.size(); i-- > 0;) {
        if (++seq[i] < c) {
          more = true;
          break;
        }
        seq[i] = 0;
      }
    }
  }
  return total / c;
}

void multiread() {
  MultireadParams mp;
  mp.top1 = 0.6;
  mp.model = DistractorModel::uniform;
  mp.n_values = {1, 3, 10, 20, 50};
  mp.trials = 100000;
  mp.seed = 3;
  mp.threads = worker_count();
  const auto rep = mc_multiread(mp);
  const double exact3 = exact_plurality_success(0.6, 10, 3);
  const auto& p3 = rep.points[1];
  const double sd3 = std::sqrt(exact3 * (1 - exact3) / static_cast<double>(p3.trials));
  const bool match = std::abs(p3.success - exact3) <= 3 * sd3;
  bool monotone = true;
  std::string curve;
  for (std::size_t i = 0; i < rep.points.size(); ++i) {
    curve += (i ? ", " : "") + std::string("n=") + std::to_string(rep.points[i].n) + " " +
             fmt(rep.points[i].success, 4);
    if (i) {
      const auto& a = rep.points[i - 1];
      const auto& b = rep.points[i];
      monotone &= b.success >= a.success - 3 * std::hypot(a.std_error, b.std_error);
    }
  }
  detail(curve);
  detail("n=3: simulated " + fmt(p3.success, 5) + ", exact " + fmt(exact3, 5) + " +- " + fmt(3 * sd3, 5) +
         " (3 sigma)");
  verdict(match && monotone, "multiread",
          std::string("n=3 ") + (match ? "matches" : "misses") + " exact enumeration, curve " +
              (monotone ? "non-decreasing" : "decreasing"));
}

// ---------------------------------------------------------------------------
void dynamic_writer() {
  const std::size_t m = 2000;
  Rng rng = make_rng(5);
  SymbolStream sym(m);
  for (auto& s : sym) s = static_cast<Label>(uniform_below(rng, 8));
  const auto addrs = address_sequence(AddressKind::covert, 42, m, 2);
  LearnableChannelParams lp;
  lp.rng_seed = 9;

  LearnableChannel st(lp);
  const WriteSet static_set = plan_static(sym, addrs, StaticPolicy{20});
  st.write(static_set);
  const double static_acc = 1.0 - static_cast<double>(verify(st, addrs, sym, 1).size()) / m;

  LearnableChannel dy(lp);
  const DynamicResult r = write_dynamic(dy, sym, addrs);
  const double ratio = static_cast<double>(r.final_set.total_samples()) / static_cast<double>(static_set.total_samples());
  detail("static(20): accuracy " + fmt(100 * static_acc) + "%, " + std::to_string(static_set.total_samples()) +
         " samples");
  detail("dynamic: accuracy " + fmt(100 * r.final_accuracy()) + "%, " + std::to_string(r.final_set.total_samples()) +
         " samples, " + std::to_string(r.history.size()) + " rounds, stop " + std::string(to_string(r.stop)));
  verdict(r.final_accuracy() >= 0.97 && r.final_accuracy() >= static_acc && ratio <= 0.5, "dynamic-writer",
          fmt(100 * r.final_accuracy()) + "% with " + fmt(100 * ratio, 1) + "% of the static samples");
}

// ---------------------------------------------------------------------------
void end_to_end() {
  EndToEndParams clean;
  clean.noisy.top1 = 1.0;
  clean.message_cells = {100000};
  clean.seed = 1;
  clean.threads = worker_count();
  const auto c = bench_end_to_end(clean).rows.at(0);
  const bool clean_ok = c.ser_after == 0.0 && c.reception.accepted && c.payload_identical;
  detail("noiseless: " + std::to_string(c.message_cells) + " cells, SER " + fmt(c.ser_after, 6) + ", reception " +
         (c.reception.accepted ? "accepted" : "rejected"));

  EndToEndParams noisy;
  noisy.noisy.top1 = 0.9;
  noisy.noisy.mode = NoiseMode::stochastic;
  noisy.n_reads = 10;
  noisy.cec = true;
  noisy.message_cells = {400000};
  noisy.seed = 1;
  noisy.threads = worker_count();
  const auto n = bench_end_to_end(noisy).rows.at(0);
  const double cells = static_cast<double>(n.message_cells);
  const double sb = std::sqrt(n.ser_before * (1 - n.ser_before) / cells);
  const double sa = std::sqrt(n.ser_after * (1 - n.ser_after) / cells);
  const double gap = n.ser_before - n.ser_after;
  const bool noisy_ok = gap > 3 * std::hypot(sb, sa);
  detail("p=0.9, n=10: " + std::to_string(n.message_cells) + " cells, errors " + std::to_string(n.errors_before) +
         " -> " + std::to_string(n.errors_after) + ", verified blocks " + std::to_string(n.verified_blocks) + "/" +
         std::to_string(n.blocks));
  detail("ser_before " + fmt(n.ser_before * 1e5, 2) + "e-5, ser_after " + fmt(n.ser_after * 1e5, 2) + "e-5, gap " +
         fmt(gap / std::hypot(sb, sa), 1) + " sigma");
  verdict(clean_ok && noisy_ok, "end-to-end",
          std::string("noiseless ") + (clean_ok ? "exact" : "not exact") + ", noisy CEC " +
              (noisy_ok ? "separates by > 3 sigma" : "does not separate"));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  table5();
  codec();
  cec_oracle();
  rs_exhaustive();
  crc_aliasing();
  addresses();
  multiread();
  dynamic_writer();
  end_to_end();
  std::cout << (9 - failures) << "/9 criteria passed in " << fmt(seconds_since(t0), 1) << " s" << std::endl;
  return failures;
}
