#include <gtest/gtest.h>

#include <filesystem>

#include "covertex/covertex.hpp"

using namespace covertex;

namespace {

std::vector<std::uint8_t> random_bytes(std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<std::uint8_t> v(n);
  for (auto& b : v) b = static_cast<std::uint8_t>(rng() >> 56);
  return v;
}

}  // namespace

TEST(Transmission, NoiselessRoundTripWithAndWithoutFraming) {
  for (int ecc : {0, 4, 5, 7}) {
    const auto payload = random_bytes(777, static_cast<std::uint64_t>(ecc));
    TransmitOptions to;
    to.ecc_block = ecc;
    const Transmission tx = build_transmission(payload, to);
    EXPECT_EQ(tx.cells.size(), transmission_length(tx.header, 10));
    const Reception rx = recover(std::span<const Label>(tx.cells), ReceiveOptions{});
    EXPECT_EQ(rx.bytes, payload);
    EXPECT_EQ(rx.data, tx.data);
    EXPECT_EQ(rx.header, tx.header);
  }
}

TEST(Transmission, ReservedLabelsBecomeZero) {
  const auto payload = random_bytes(30, 1);
  const Transmission tx = build_transmission(payload, TransmitOptions{});
  auto cells = tx.cells;
  cells[48] = 9;
  ReceiveOptions ro;
  ro.use_cec = false;
  const Reception rx = recover(std::span<const Label>(cells), ro);
  EXPECT_EQ(rx.reserved_replaced, 1u);
  EXPECT_EQ(rx.bytes.size(), payload.size());
}

TEST(Transmission, CecRepairsChannelErrors) {
  const auto payload = random_bytes(3000, 2);
  TransmitOptions to;
  to.ecc_block = 5;
  const Transmission tx = build_transmission(payload, to);
  NoisyChannelParams np;
  np.top1 = 0.9;
  np.rng_seed = 3;
  NoisyChannel ch(np);
  const auto addrs = address_sequence(AddressKind::ood, 4, tx.cells.size());
  ch.write(plan_static(tx.cells, addrs, StaticPolicy{}));
  ReceiveOptions ro;
  ro.top_k = 4;
  ro.depth_limit = 450;
  const Reception rx = receive(ch, addrs, 10, ro);
  ASSERT_TRUE(rx.correction);
  EXPECT_EQ(rx.correction->verified(), rx.correction->permutations.size());
  EXPECT_EQ(rx.bytes, payload);
  EXPECT_GE(hamming_distance(rx.data_uncorrected, tx.data), hamming_distance(rx.data, tx.data));
}

TEST(Transmission, ReceiveReadsOnlyAnnouncedCells) {
  const auto payload = random_bytes(10, 3);
  const Transmission tx = build_transmission(payload, TransmitOptions{});
  NoisyChannel ch(NoisyChannelParams{});
  const auto addrs = address_sequence(AddressKind::ood, 5, tx.cells.size() + 100);
  ch.write(plan_static(tx.cells, addrs, StaticPolicy{}));
  std::size_t asked = 0;
  const AddressSource src = [&](std::size_t n) {
    asked = std::max(asked, n);
    return std::vector<AddressSpec>(addrs.begin(), addrs.begin() + static_cast<std::ptrdiff_t>(n));
  };
  const Reception rx = receive(ch, src, 1, ReceiveOptions{});
  EXPECT_EQ(asked, tx.cells.size());
  EXPECT_EQ(rx.bytes, payload);
  EXPECT_THROW(receive(ch, std::span(addrs).first(30), 1, ReceiveOptions{}), ConfigError);
}

TEST(Transmission, ImagePayloadRoundTrip) {
  const ImageBuffer img = synthetic_natural(ImageShape{20, 12, 3}, 4);
  const auto bytes = image_payload(img);
  ASSERT_EQ(bytes.size(), 6 + (20 * 12 * 3 * 3 + 7) / 8);
  EXPECT_EQ(bytes[0], 'I');
  const auto back = payload_image(bytes);
  ASSERT_TRUE(back);
  EXPECT_EQ(*back, dequantize_image(quantize_image(img), 20, 12, 3));
  EXPECT_GE(psnr(img, *back), 28.0);
  EXPECT_FALSE(payload_image(random_bytes(40, 5)).has_value());
  // the preamble occupies exactly 16 three-bit cells
  EXPECT_EQ(encode_bits(std::span(bytes).first(6), 3).payload.size(), 16u);
}

TEST(Transmission, StreamFileRoundTrip) {
  TransmitOptions to;
  to.ecc_block = 7;
  const Transmission tx = build_transmission(random_bytes(101, 6), to);
  const StreamFile f{10, tx.header, tx.cells};
  const auto bytes = serialize_stream(f);
  EXPECT_EQ(bytes.size(), 24 + (tx.cells.size() + 1) / 2);
  const StreamFile g = parse_stream(bytes);
  EXPECT_EQ(g.cells, f.cells);
  EXPECT_EQ(g.header, f.header);
  EXPECT_EQ(g.class_count, 10);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(parse_stream(bad), FramingError);
  bad = bytes;
  bad.pop_back();
  EXPECT_THROW(parse_stream(bad), FramingError);
  const auto path = std::filesystem::temp_directory_path() / "covertex_stream_test.cvtx";
  write_stream_file(path, f);
  EXPECT_EQ(read_stream_file(path).cells, f.cells);
  std::filesystem::remove(path);
}

TEST(Transmission, PnmRoundTrip) {
  for (int ch : {1, 3}) {
    const ImageBuffer img = synthetic_natural(ImageShape{17, 9, ch}, 7);
    const auto path = std::filesystem::temp_directory_path() / "covertex_pnm_test.pnm";
    write_pnm(path, img);
    EXPECT_EQ(read_pnm(path), img);
    std::filesystem::remove(path);
  }
}
