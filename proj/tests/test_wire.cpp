#include <gtest/gtest.h>

#include <sys/socket.h>

#include <thread>

#include "covertex/covertex.hpp"

using namespace covertex;

namespace {

struct Served {
  NoisyChannel channel;
  std::thread server;
  std::unique_ptr<ExternalBackend> client;
  int resets = 0;

  explicit Served(NoisyChannelParams p) : channel(p) {
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) throw std::runtime_error("socketpair");
    server = std::thread([this, fd = fds[1]] {
      FdLineStream io(fd, fd);
      ServeHooks hooks;
      hooks.reset = [this] { ++resets; };
      serve_protocol(channel, io, hooks);
    });
    client = std::make_unique<ExternalBackend>(std::make_unique<FdLineStream>(fds[0], fds[0]));
  }
  ~Served() {
    client.reset();
    server.join();
  }
};

}  // namespace

TEST(Wire, WriteReadAndCountsMatchTheServedBackend) {
  NoisyChannelParams p;
  p.top1 = 0.7;
  p.rng_seed = 4;
  Served s(p);
  NoisyChannel local(p);
  const auto addrs = address_sequence(AddressKind::covert, 3, 40, 2);
  SymbolStream sym(addrs.size());
  for (std::size_t i = 0; i < sym.size(); ++i) sym[i] = static_cast<Label>(i % 8);
  const WriteSet ws = plan_static(sym, addrs, StaticPolicy{4});
  const TrainReport a = s.client->write(ws);
  const TrainReport b = local.write(ws);
  EXPECT_DOUBLE_EQ(a.baseline_accuracy_before, b.baseline_accuracy_before);
  EXPECT_DOUBLE_EQ(a.baseline_accuracy_after, b.baseline_accuracy_after);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(s.client->read(addrs[i]), local.read(addrs[i]));
  const auto obs = s.client->read_counts(addrs[20], 50);
  EXPECT_EQ(obs.counts, local.read_counts(addrs[20], 50).counts);
  EXPECT_EQ(obs.n, 50u);
  s.client->reset();
  EXPECT_EQ(s.resets, 1);
}

TEST(Wire, ErrorsBecomeBackendErrors) {
  Served s(NoisyChannelParams{});
  EXPECT_THROW(s.client->finetune(0.1, 1), BackendError);
  WriteSet bad;
  bad.entries.push_back(WriteEntry{gen_address(AddressKind::ood, 1, 0), 12, 1});
  EXPECT_THROW(s.client->write(bad), ConfigError);
  // the session survives an error reply
  EXPECT_NO_THROW(s.client->read(gen_address(AddressKind::ood, 1, 1)));
}

TEST(Wire, EndToEndThroughTheProtocol) {
  NoisyChannelParams p;
  p.top1 = 0.9;
  p.rng_seed = 8;
  Served s(p);
  std::vector<std::uint8_t> payload(500);
  for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<std::uint8_t>(i * 37);
  TransmitOptions to;
  to.ecc_block = 5;
  const Transmission tx = build_transmission(payload, to);
  const auto addrs = address_sequence(AddressKind::ood, 9, tx.cells.size());
  s.client->write(plan_static(tx.cells, addrs, StaticPolicy{}));
  ReceiveOptions ro;
  ro.depth_limit = 450;
  EXPECT_EQ(receive(*s.client, addrs, 10, ro).bytes, payload);
}

TEST(Wire, ServerAnswersErrForBadRequests) {
  int fds[2];
  ASSERT_EQ(::socketpair(AF_UNIX, SOCK_STREAM, 0, fds), 0);
  NoisyChannel ch(NoisyChannelParams{});
  std::thread server([&ch, fd = fds[1]] {
    FdLineStream io(fd, fd);
    serve_protocol(ch, io);
  });
  {
    FdLineStream io(fds[0], fds[0]);
    std::string reply;
    for (const char* req : {"BOGUS", "READ not-an-address", "READN ood:0000000000000001:0:0 0", "RESET", "PRUNE 0.5",
                            "HELLO 7"}) {
      io.write_line(req);
      ASSERT_TRUE(io.read_line(reply));
      EXPECT_EQ(reply.rfind("ERR ", 0), 0u) << req << " -> " << reply;
    }
    io.write_line("WRITE 1");
    io.write_line("S ood:0000000000000001:0:0 12 1");
    io.write_line("TRAIN 1");
    ASSERT_TRUE(io.read_line(reply));
    EXPECT_EQ(reply.rfind("ERR ", 0), 0u) << reply;
    io.write_line("HELLO 1");
    ASSERT_TRUE(io.read_line(reply));
    EXPECT_EQ(reply, "OK 1");
  }
  server.join();
}

TEST(Wire, SplitWords) {
  EXPECT_EQ(split_words("  READN  a 3 "), (std::vector<std::string>{"READN", "a", "3"}));
  EXPECT_TRUE(split_words("").empty());
}

TEST(Wire, HandshakeRejectsOtherVersions) {
  int fds[2];
  ASSERT_EQ(::socketpair(AF_UNIX, SOCK_STREAM, 0, fds), 0);
  std::thread fake([fd = fds[1]] {
    FdLineStream io(fd, fd);
    std::string line;
    io.read_line(line);
    io.write_line("OK 2");
  });
  EXPECT_THROW(ExternalBackend(std::make_unique<FdLineStream>(fds[0], fds[0])), BackendError);
  fake.join();
}
