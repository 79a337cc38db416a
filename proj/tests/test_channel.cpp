#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "covertex/covertex.hpp"

using namespace covertex;

namespace {

WriteSet single_writes(const std::vector<AddressSpec>& addrs, const SymbolStream& labels, std::uint32_t samples) {
  WriteSet ws;
  for (std::size_t i = 0; i < addrs.size(); ++i) ws.entries.push_back(WriteEntry{addrs[i], labels[i], samples});
  return ws;
}

// P(plurality of n reads is the true label), smallest label winning ties,
// over every read sequence, averaged over a uniform true label.
double exact_multiread(double p, int c, int n) {
  const double q = (1.0 - p) / (c - 1);
  double total = 0;
  for (int truth = 0; truth < c; ++truth) {
    std::vector<int> seq(static_cast<std::size_t>(n), 0);
    for (;;) {
      double pr = 1;
      std::vector<std::uint32_t> counts(static_cast<std::size_t>(c), 0);
      for (int r : seq) {
        pr *= r == truth ? p : q;
        ++counts[static_cast<std::size_t>(r)];
      }
      if (plurality(counts) == truth) total += pr;
      int i = n - 1;
      while (i >= 0 && ++seq[static_cast<std::size_t>(i)] == c) seq[static_cast<std::size_t>(i--)] = 0;
      if (i < 0) break;
    }
  }
  return total / c;
}

}  // namespace

TEST(RankModel, Distribution) {
  const auto pr = rank_distribution(0.9, 10);
  ASSERT_EQ(pr.size(), 10u);
  EXPECT_DOUBLE_EQ(pr[0], 0.9);
  EXPECT_DOUBLE_EQ(pr[1], 0.05);
  EXPECT_DOUBLE_EQ(pr[2], 0.025);
  EXPECT_DOUBLE_EQ(pr[9], pr[8]);
  EXPECT_NEAR(std::accumulate(pr.begin(), pr.end(), 0.0), 1.0, 1e-12);
  EXPECT_THROW(rank_distribution(1.5, 10), ConfigError);
}

TEST(RankModel, LatentRankingPlacesTruth) {
  Rng rng = make_rng(1);
  for (int rank = 1; rank <= 10; ++rank) {
    const auto r = latent_ranking(3, rank, 10, rng);
    ASSERT_EQ(r.size(), 10u);
    EXPECT_EQ(r[static_cast<std::size_t>(rank - 1)], 3);
    std::vector<Label> sorted(r);
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 10; ++i) EXPECT_EQ(sorted[static_cast<std::size_t>(i)], i);
  }
}

TEST(NoisyChannel, StochasticReadFrequency) {
  NoisyChannelParams p;
  p.top1 = 0.8;
  p.rng_seed = 3;
  NoisyChannel ch(p);
  const auto a = gen_address(AddressKind::ood, 1, 0);
  ch.write(single_writes({a}, {4}, 20));
  const auto obs = ch.read_counts(a, 20000);
  EXPECT_NEAR(obs.counts[4] / 20000.0, 0.8, 0.015);
}

TEST(NoisyChannel, RankAssignmentProfile) {
  NoisyChannelParams p;
  p.top1 = 0.85;
  p.mode = NoiseMode::rank_assignment;
  p.rng_seed = 4;
  NoisyChannel ch(p);
  const auto addrs = address_sequence(AddressKind::ood, 2, 20000);
  SymbolStream labels(addrs.size());
  Rng rng = make_rng(5);
  for (auto& l : labels) l = static_cast<Label>(uniform_below(rng, 8));
  ch.write(single_writes(addrs, labels, 1));
  std::vector<int> rank_hist(10, 0);
  for (std::size_t i = 0; i < addrs.size(); ++i) {
    const auto r = ch.ranking(addrs[i]);
    const auto pos = std::find(r.begin(), r.end(), labels[i]) - r.begin();
    ++rank_hist[static_cast<std::size_t>(pos)];
    EXPECT_EQ(ch.read(addrs[i]), r.front());
  }
  const auto pr = rank_distribution(0.85, 10);
  for (int k = 0; k < 4; ++k) {
    const double sd = std::sqrt(pr[static_cast<std::size_t>(k)] * (1 - pr[static_cast<std::size_t>(k)]) / 20000.0);
    EXPECT_NEAR(rank_hist[static_cast<std::size_t>(k)] / 20000.0, pr[static_cast<std::size_t>(k)], 4 * sd);
  }
}

TEST(NoisyChannel, SaveLoadPreservesReads) {
  NoisyChannelParams p;
  p.top1 = 0.7;
  p.rng_seed = 6;
  NoisyChannel a(p);
  const auto addrs = address_sequence(AddressKind::covert, 9, 30, 2);
  SymbolStream labels(addrs.size(), 2);
  a.write(single_writes(addrs, labels, 5));
  NoisyChannel b = NoisyChannel::load(a.save());
  for (const auto& ad : addrs) EXPECT_EQ(a.read(ad), b.read(ad));
  EXPECT_EQ(a.save(), b.save());
}

TEST(NoisyChannel, RepeatProbabilityCorrelatesReads) {
  NoisyChannelParams p;
  p.top1 = 0.5;
  p.repeat_prob = 0.9;
  p.rng_seed = 8;
  NoisyChannel ch(p);
  const auto a = gen_address(AddressKind::ood, 1, 0);
  ch.write(single_writes({a}, {1}, 1));
  int same = 0;
  Label prev = ch.read(a);
  for (int i = 0; i < 5000; ++i) {
    const Label l = ch.read(a);
    same += l == prev;
    prev = l;
  }
  EXPECT_GT(same, 4500);
}

TEST(LearnableChannel, MoreSamplesLearnMoreAndCostMore) {
  LearnableChannelParams p;
  p.rng_seed = 3;
  const auto addrs = address_sequence(AddressKind::ood, 3, 2000);
  SymbolStream labels(addrs.size(), 5);
  double prev_acc = -1, prev_base = 2;
  for (std::uint32_t s : {1u, 5u, 20u, 80u}) {
    LearnableChannel ch(p);
    const auto r = ch.write(single_writes(addrs, labels, s));
    std::size_t ok = 0;
    for (const auto& a : addrs) ok += ch.read(a) == 5;
    const double acc = static_cast<double>(ok) / addrs.size();
    EXPECT_GT(acc, prev_acc);
    EXPECT_LT(r.baseline_accuracy_after, prev_base);
    EXPECT_EQ(r.total_patched_samples, addrs.size() * s);
    prev_acc = acc;
    prev_base = r.baseline_accuracy_after;
  }
  EXPECT_GT(prev_acc, 0.95);
  LearnableChannel ch(p);
  ch.write(single_writes(addrs, labels, 3));
  LearnableChannel back = LearnableChannel::load(ch.save());
  for (const auto& a : addrs) ASSERT_EQ(ch.read(a), back.read(a));
}

TEST(Replay, RecordsAndReplaysReads) {
  NoisyChannelParams p;
  p.top1 = 0.6;
  p.rng_seed = 11;
  NoisyChannel ch(p);
  const auto addrs = address_sequence(AddressKind::ood, 12, 20);
  ch.write(single_writes(addrs, SymbolStream(addrs.size(), 3), 1));
  std::stringstream trace;
  RecordingBackend rec(ch, trace);
  std::vector<Label> seen;
  for (const auto& a : addrs) seen.push_back(rec.read(a));
  ReplayChannel rp(read_trace(trace));
  for (std::size_t i = 0; i < addrs.size(); ++i) EXPECT_EQ(rp.read(addrs[i]), seen[i]);
  EXPECT_THROW(rp.read(addrs[0]), BackendError);
  std::stringstream again(trace.str());
  ReplayChannel rp2(read_trace(again));
  EXPECT_THROW(rp2.read(addrs[1]), BackendError);
  EXPECT_THROW(rp2.write(WriteSet{}), BackendError);
}

TEST(Reader, SmoothedRanking) {
  ReadObservation obs;
  obs.n = 10;
  obs.counts = {0, 6, 0, 4, 0, 0, 0, 0, 0, 0};
  const auto cell = rank_observation(obs, 0.1);
  EXPECT_EQ(cell.candidates[0], 1);
  EXPECT_EQ(cell.candidates[1], 3);
  EXPECT_EQ(cell.candidates[2], 0);
  EXPECT_DOUBLE_EQ(cell.probs[0], 6.1 / 11.0);
  EXPECT_NEAR(std::accumulate(cell.probs.begin(), cell.probs.end(), 0.0), 1.0, 1e-12);
  obs.counts = {0, 5, 0, 5, 0, 0, 0, 0, 0, 0};
  EXPECT_EQ(plurality(obs.counts), 1);
  obs.tie_order = {3, 1, 0, 2, 4, 5, 6, 7, 8, 9};
  EXPECT_EQ(rank_observation(obs, 0.1).top(), 3);
  obs.n = 11;
  EXPECT_THROW(rank_observation(obs, 0.1), BackendError);
}

TEST(Multiread, MonteCarloMatchesExactEnumeration) {
  MultireadParams p;
  p.top1 = 0.6;
  p.n_values = {1, 3, 5};
  p.trials = 100000;
  p.seed = 7;
  const auto rep = mc_multiread(p);
  for (const auto& pt : rep.points) {
    const double exact = exact_multiread(0.6, 10, pt.n);
    const double sd = std::sqrt(exact * (1 - exact) / pt.trials);
    EXPECT_NEAR(pt.success, exact, 4 * sd) << "n=" << pt.n;
  }
  EXPECT_NEAR(exact_multiread(0.6, 10, 1), 0.6, 1e-12);
}

TEST(Multiread, IndependentOfThreadCount) {
  MultireadParams p;
  p.model = DistractorModel::geometric;
  p.trials = 20000;
  p.threads = 1;
  const auto a = mc_multiread(p);
  p.threads = 3;
  const auto b = mc_multiread(p);
  for (std::size_t i = 0; i < a.points.size(); ++i) EXPECT_EQ(a.points[i].successes, b.points[i].successes);
}

TEST(Ncc, UpperBound) {
  EXPECT_DOUBLE_EQ(ncc_upper_bound(1e6, 0.5, 32), 1.6e7);
  TrainReport r;
  r.baseline_accuracy_before = 0.99;
  r.baseline_accuracy_after = 0.985;
  EXPECT_TRUE(check_neural_channel(r, 0.01, std::vector<ReceptionReport>{ReceptionReport{}}));
  r.baseline_accuracy_after = 0.97;
  EXPECT_FALSE(check_neural_channel(r, 0.01, std::vector<ReceptionReport>{}));
}
