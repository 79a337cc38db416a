#include <gtest/gtest.h>

#include "covertex/covertex.hpp"

using namespace covertex;

namespace {

SymbolStream random_symbols(std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  SymbolStream s(n);
  for (auto& x : s) x = static_cast<Label>(uniform_below(rng, 8));
  return s;
}

}  // namespace

TEST(Writer, StaticPlan) {
  const auto sym = random_symbols(50, 1);
  const auto addrs = address_sequence(AddressKind::ood, 1, 60);
  const WriteSet ws = plan_static(sym, addrs, StaticPolicy{7});
  ASSERT_EQ(ws.entries.size(), 50u);
  EXPECT_EQ(ws.total_samples(), 350u);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(ws.entries[i].address, addrs[i]);
    EXPECT_EQ(ws.entries[i].label, sym[i]);
  }
  EXPECT_THROW(plan_static(sym, std::span(addrs).first(10), StaticPolicy{7}), ConfigError);
  EXPECT_THROW(plan_static(sym, addrs, StaticPolicy{0}), ConfigError);
}

TEST(Writer, WriteSetTextRoundTrip) {
  const auto sym = random_symbols(20, 2);
  const auto ws = plan_static(sym, address_sequence(AddressKind::covert, 2, 20, 1), StaticPolicy{3});
  std::stringstream ss;
  write_writeset(ss, ws);
  EXPECT_EQ(read_writeset(ss), ws);
}

TEST(Writer, DynamicBeatsStaticWithFewerSamples) {
  const std::size_t m = 2000;
  const auto sym = random_symbols(m, 5);
  const auto addrs = address_sequence(AddressKind::covert, 42, m, 2);
  LearnableChannelParams lp;
  lp.rng_seed = 9;

  LearnableChannel st(lp);
  const WriteSet ss = plan_static(sym, addrs, StaticPolicy{20});
  st.write(ss);
  const double static_acc = 1.0 - static_cast<double>(verify(st, addrs, sym, 1).size()) / m;

  LearnableChannel dy(lp);
  const DynamicResult r = write_dynamic(dy, sym, addrs);
  EXPECT_GE(r.final_accuracy(), 0.97);
  EXPECT_GE(r.final_accuracy(), static_acc);
  EXPECT_LE(r.final_set.total_samples(), ss.total_samples() / 2);
  ASSERT_FALSE(r.history.empty());
  EXPECT_EQ(r.history.front().written_entries, m);
  for (std::size_t i = 1; i < r.history.size(); ++i)
    EXPECT_EQ(r.history[i].written_entries, std::min(r.history[i - 1].failing, m));
}

TEST(Writer, StopsWhenEverythingVerifies) {
  const auto sym = random_symbols(100, 6);
  const auto addrs = address_sequence(AddressKind::ood, 6, 100);
  NoisyChannel ch(NoisyChannelParams{});
  const DynamicResult r = write_dynamic(ch, sym, addrs);
  EXPECT_EQ(r.stop, StopReason::all_verified);
  EXPECT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.final_set.total_samples(), 500u);
}

TEST(Writer, StopsAtThePerAddressCap) {
  const auto sym = random_symbols(20, 7);
  const auto addrs = address_sequence(AddressKind::ood, 7, 20);
  NoisyChannelParams np;
  np.top1 = 0.3;
  NoisyChannel ch(np);
  DynamicPolicy pol;
  pol.max_per_address = 10;
  pol.plateau_window = 100;
  const DynamicResult r = write_dynamic(ch, sym, addrs, pol);
  EXPECT_EQ(r.stop, StopReason::per_address_max);
  EXPECT_FALSE(r.unresolved.empty());
  for (const auto& e : r.final_set.entries) EXPECT_LE(e.sample_count, 10u);
}

TEST(Writer, ReplayBackendRefusesIncrementalWrites) {
  ReplayChannel rp({});
  const auto sym = random_symbols(3, 8);
  EXPECT_THROW(write_dynamic(rp, sym, address_sequence(AddressKind::ood, 1, 3)), BackendError);
}
