#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "covertex/error.hpp"
#include "covertex/image.hpp"
#include "covertex/permutation.hpp"
#include "covertex/rng.hpp"

namespace covertex {

enum class AddressKind : std::uint8_t { ood, covert };

// One address of the pre-agreed sequence. (kind, seed, index, num_patches)
// fully determines the rendered pattern. num_patches is 0 for ood addresses.
struct AddressSpec {
  AddressKind kind = AddressKind::ood;
  std::uint64_t seed = 0;
  std::uint64_t index = 0;
  int num_patches = 0;

  auto operator<=>(const AddressSpec&) const = default;
};

struct AddressSpecHash {
  std::size_t operator()(const AddressSpec& a) const noexcept {
    return static_cast<std::size_t>(derive_seed(
        a.seed, {a.index, static_cast<std::uint64_t>(a.kind), static_cast<std::uint64_t>(a.num_patches)}));
  }
};

inline constexpr int kPatchSlots = 8;
inline constexpr int kPatchPatterns = 10;
inline constexpr int kBackgroundClasses = 10;
inline constexpr int kPatchSize = 4;
inline constexpr int kOodIntensityLevels = 8;
inline constexpr std::uint64_t kOodSpaceSize = std::uint64_t{1} << 40;

namespace detail {

// C(n, k) saturating at UINT64_MAX.
inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    r = r * (n - k + i) / i;
    if (r > ~std::uint64_t{0}) return ~std::uint64_t{0};
  }
  return static_cast<std::uint64_t>(r);
}

// Colexicographic unranking of a k-subset of [0, n), ascending.
inline std::vector<std::uint64_t> unrank_combination(std::uint64_t rank, std::uint64_t n, int k) {
  std::vector<std::uint64_t> out(static_cast<std::size_t>(k));
  std::uint64_t hi = n;
  for (int i = k; i >= 1; --i) {
    // largest c < hi with C(c, i) <= rank
    std::uint64_t lo = static_cast<std::uint64_t>(i - 1), top = hi - 1;
    while (lo < top) {
      const std::uint64_t mid = lo + (top - lo + 1) / 2;
      if (binomial(mid, static_cast<std::uint64_t>(i)) <= rank) lo = mid;
      else top = mid - 1;
    }
    out[static_cast<std::size_t>(i - 1)] = lo;
    rank -= binomial(lo, static_cast<std::uint64_t>(i));
    hi = lo;
  }
  return out;
}

constexpr std::uint64_t kCovertKeyTag = 0xC0BE47ull;
constexpr std::uint64_t kOodKeyTag = 0x00D0ull;

}  // namespace detail

inline std::uint64_t address_count(AddressKind kind, int num_patches) {
  if (kind == AddressKind::ood) return kOodSpaceSize;
  if (num_patches != 1 && num_patches != 2)
    throw ConfigError("covert addresses support 1 or 2 patches, got " + std::to_string(num_patches));
  std::uint64_t patterns = 1;
  for (int i = 0; i < num_patches; ++i) patterns *= kPatchPatterns;
  return detail::binomial(kPatchSlots, static_cast<std::uint64_t>(num_patches)) * patterns * kBackgroundClasses;
}

inline AddressSpec gen_address(AddressKind kind, std::uint64_t seed, std::uint64_t index,
                               int num_patches = 0) {
  if (kind == AddressKind::ood && num_patches != 0)
    throw ConfigError("ood addresses take num_patches = 0");
  if (index >= address_count(kind, num_patches))
    throw ConfigError("address index " + std::to_string(index) + " out of range");
  return AddressSpec{kind, seed, index, num_patches};
}

inline std::vector<AddressSpec> address_sequence(AddressKind kind, std::uint64_t seed,
                                                 std::uint64_t count, int num_patches = 0,
                                                 std::uint64_t first = 0) {
  if (first + count > address_count(kind, num_patches))
    throw ConfigError("address space holds " + std::to_string(address_count(kind, num_patches)) +
                      " addresses, " + std::to_string(first + count) + " requested");
  std::vector<AddressSpec> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::uint64_t i = 0; i < count; ++i) out.push_back(AddressSpec{kind, seed, first + i, num_patches});
  return out;
}

// ---------------------------------------------------------------------------
// Canonical text form: <kind>:<seed-hex>:<index>:<num_patches>
// ---------------------------------------------------------------------------
inline std::string canonical_string(const AddressSpec& a) {
  char seed[17];
  static constexpr char kHex[] = "0123456789abcdef";
  for (int i = 0; i < 16; ++i) seed[i] = kHex[(a.seed >> (60 - 4 * i)) & 0xF];
  seed[16] = '\0';
  return std::string(a.kind == AddressKind::covert ? "cov" : "ood") + ':' + seed + ':' +
         std::to_string(a.index) + ':' + std::to_string(a.num_patches);
}

inline AddressSpec parse_address(std::string_view text) {
  auto fail = [&] { return FramingError("malformed address '" + std::string(text) + "'"); };
  std::array<std::string_view, 4> parts;
  std::size_t pos = 0;
  for (int i = 0; i < 4; ++i) {
    const std::size_t next = text.find(':', pos);
    if ((i < 3) == (next == std::string_view::npos)) throw fail();
    parts[static_cast<std::size_t>(i)] = text.substr(pos, i < 3 ? next - pos : std::string_view::npos);
    pos = next + 1;
  }
  AddressSpec a;
  if (parts[0] == "cov") a.kind = AddressKind::covert;
  else if (parts[0] == "ood") a.kind = AddressKind::ood;
  else throw fail();

  auto parse_num = [&](std::string_view s, int base, auto& out) {
    if (s.empty()) throw fail();
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out, base);
    if (ec != std::errc{} || p != s.data() + s.size()) throw fail();
  };
  if (parts[1].size() > 16) throw fail();
  parse_num(parts[1], 16, a.seed);
  parse_num(parts[2], 10, a.index);
  parse_num(parts[3], 10, a.num_patches);
  try {
    return gen_address(a.kind, a.seed, a.index, a.num_patches);
  } catch (const ConfigError&) {
    throw fail();
  }
}

inline void write_address_list(std::ostream& out, std::span<const AddressSpec> addrs) {
  for (const auto& a : addrs) out << canonical_string(a) << '\n';
}

inline std::vector<AddressSpec> read_address_list(std::istream& in) {
  std::vector<AddressSpec> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out.push_back(parse_address(line));
  }
  return out;
}

inline std::vector<AddressSpec> read_address_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_address_list(in);
}

// ---------------------------------------------------------------------------
// Covert patterns: patch patterns at fixed periphery slots on a background
// image of a given class.
// ---------------------------------------------------------------------------
struct PatchRect {
  int x = 0;
  int y = 0;
  int w = kPatchSize;
  int h = kPatchSize;

  bool contains(int px, int py) const { return px >= x && px < x + w && py >= y && py < y + h; }
  bool overlaps(const PatchRect& o) const {
    return x < o.x + o.w && o.x < x + w && y < o.y + o.h && o.y < y + h;
  }
};

// Slots 0..7: corners and edge midpoints, one pixel in from the border, in
// row order (top row left to right, the two middle-row slots, bottom row).
inline std::array<PatchRect, kPatchSlots> patch_slots(const ImageShape& shape) {
  if (shape.width < 16 || shape.height < 16) throw ConfigError("covert slots need at least 16x16 images");
  const int xs[3] = {1, (shape.width - kPatchSize) / 2, shape.width - kPatchSize - 1};
  const int ys[3] = {1, (shape.height - kPatchSize) / 2, shape.height - kPatchSize - 1};
  std::array<PatchRect, kPatchSlots> slots{};
  int s = 0;
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col)
      if (!(row == 1 && col == 1)) slots[static_cast<std::size_t>(s++)] = PatchRect{xs[col], ys[row]};
  return slots;
}

// 4x4 masks, one row per nibble, most significant bit = leftmost pixel.
inline constexpr std::array<std::uint16_t, kPatchPatterns> kPatchMasks = {
    0xFFFF,  // solid
    0xA5A5,  // checker
    0x5A5A,  // inverse checker
    0xF0F0,  // horizontal bars
    0xAAAA,  // vertical bars
    0xF99F,  // frame
    0x0660,  // centre dot
    0x8421,  // diagonal
    0x1248,  // anti-diagonal
    0x6FF6,  // plus
};

inline bool patch_bit(int pattern, int px, int py) {
  const std::uint16_t m = kPatchMasks[static_cast<std::size_t>(pattern)];
  return (m >> (15 - (py * kPatchSize + px))) & 1u;
}

struct CovertPattern {
  std::vector<int> locations;  // strictly increasing slot ids
  std::vector<int> patterns;   // pattern id per location
  int background_class = 0;

  bool operator==(const CovertPattern&) const = default;
};

inline CovertPattern covert_pattern(const AddressSpec& a) {
  if (a.kind != AddressKind::covert) throw ConfigError("not a covert address");
  const std::uint64_t count = address_count(a.kind, a.num_patches);
  if (a.index >= count) throw ConfigError("covert index out of range");
  const KeyedPermutation perm(count, derive_seed(a.seed, {detail::kCovertKeyTag, std::uint64_t(a.num_patches)}));
  std::uint64_t v = perm(a.index);

  CovertPattern p;
  p.background_class = static_cast<int>(v % kBackgroundClasses);
  v /= kBackgroundClasses;
  for (int i = 0; i < a.num_patches; ++i) {
    p.patterns.push_back(static_cast<int>(v % kPatchPatterns));
    v /= kPatchPatterns;
  }
  for (std::uint64_t loc : detail::unrank_combination(v, kPatchSlots, a.num_patches))
    p.locations.push_back(static_cast<int>(loc));
  return p;
}

// ---------------------------------------------------------------------------
// Out-of-distribution patterns: k lit pixels on a black canvas.
// ---------------------------------------------------------------------------
struct PixelPos {
  int x = 0;
  int y = 0;
  int channel = 0;

  auto operator<=>(const PixelPos&) const = default;
};

struct OodPattern {
  std::vector<PixelPos> lit;
  std::vector<std::uint8_t> intensity;  // one per lit pixel

  bool operator==(const OodPattern&) const = default;
};

// Index space is tiered by the number of lit pixels k = 1, 2, ...; tier k holds
// C(N, k) * kOodIntensityLevels patterns for N canvas positions. Within a tier
// the index selects a position subset and an intensity level; subsets map to
// canvas positions through a seed-keyed permutation of [0, N).
inline OodPattern ood_pattern(const AddressSpec& a, const ImageShape& shape) {
  if (a.kind != AddressKind::ood) throw ConfigError("not an ood address");
  const std::uint64_t n = shape.size();
  std::uint64_t r = a.index;
  int k = 1;
  for (;; ++k) {
    const std::uint64_t tier = detail::binomial(n, static_cast<std::uint64_t>(k));
    if (tier == 0) throw ConfigError("ood index exceeds the canvas pattern space");
    const std::uint64_t tier_count =
        tier > (~std::uint64_t{0}) / kOodIntensityLevels ? ~std::uint64_t{0} : tier * kOodIntensityLevels;
    if (r < tier_count) break;
    r -= tier_count;
  }
  const int level = static_cast<int>(r % kOodIntensityLevels);
  const std::uint64_t comb = r / kOodIntensityLevels;
  const KeyedPermutation perm(n, derive_seed(a.seed, {detail::kOodKeyTag, n}));

  OodPattern p;
  for (std::uint64_t e : detail::unrank_combination(comb, n, k)) {
    const std::uint64_t pos = perm(e);
    const int c = static_cast<int>(pos % static_cast<std::uint64_t>(shape.channels));
    const std::uint64_t pix = pos / static_cast<std::uint64_t>(shape.channels);
    p.lit.push_back(PixelPos{static_cast<int>(pix % static_cast<std::uint64_t>(shape.width)),
                             static_cast<int>(pix / static_cast<std::uint64_t>(shape.width)), c});
  }
  std::sort(p.lit.begin(), p.lit.end(), [](const PixelPos& l, const PixelPos& r) {
    return std::tie(l.y, l.x, l.channel) < std::tie(r.y, r.x, r.channel);
  });
  p.intensity.assign(p.lit.size(), static_cast<std::uint8_t>(255 - 32 * level));
  return p;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------
struct LabeledImage {
  ImageBuffer image;
  int label = 0;
};

inline ImageBuffer render(const AddressSpec& a, const ImageShape& shape,
                          const LabeledImage* background = nullptr) {
  if (a.kind == AddressKind::ood) {
    if (background) throw ConfigError("ood addresses render on a blank canvas");
    ImageBuffer img(shape);
    const OodPattern p = ood_pattern(a, shape);
    for (std::size_t i = 0; i < p.lit.size(); ++i) img.at(p.lit[i].x, p.lit[i].y, p.lit[i].channel) = p.intensity[i];
    return img;
  }

  if (!background) throw ConfigError("covert address needs a background image");
  const CovertPattern p = covert_pattern(a);
  if (background->label != p.background_class)
    throw ConfigError("background class " + std::to_string(background->label) + " does not match address class " +
                      std::to_string(p.background_class));
  if (!(background->image.shape() == shape)) throw ConfigError("background shape mismatch");

  ImageBuffer img = background->image;
  const auto slots = patch_slots(shape);
  for (std::size_t i = 0; i < p.locations.size(); ++i) {
    const PatchRect& r = slots[static_cast<std::size_t>(p.locations[i])];
    for (int py = 0; py < r.h; ++py)
      for (int px = 0; px < r.w; ++px) {
        const std::uint8_t v = patch_bit(p.patterns[i], px, py) ? 255 : 0;
        for (int c = 0; c < shape.channels; ++c) img.at(r.x + px, r.y + py, c) = v;
      }
  }
  return img;
}

inline ImageBuffer render(const AddressSpec& a, const ImageShape& shape, const LabeledImage& background) {
  return render(a, shape, &background);
}

// ---------------------------------------------------------------------------
// Covertness: cosine similarity of each patched image to the mean reference.
// ---------------------------------------------------------------------------
inline std::vector<double> covertness_score(std::span<const ImageBuffer> patched,
                                           std::span<const ImageBuffer> reference) {
  if (patched.empty() || reference.empty()) throw ConfigError("covertness needs non-empty image sets");
  const ImageShape shape = reference.front().shape();
  std::vector<double> mean(shape.size(), 0.0);
  for (const auto& img : reference) {
    if (!(img.shape() == shape)) throw ConfigError("reference images differ in shape");
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += img.pixels()[i];
  }
  double mean_norm = 0;
  for (double& m : mean) {
    m /= static_cast<double>(reference.size());
    mean_norm += m * m;
  }
  if (mean_norm == 0) throw ConfigError("reference mean is the zero vector");
  mean_norm = std::sqrt(mean_norm);

  std::vector<double> scores;
  scores.reserve(patched.size());
  for (const auto& img : patched) {
    if (!(img.shape() == shape)) throw ConfigError("patched image shape mismatch");
    double dot = 0, norm = 0;
    for (std::size_t i = 0; i < mean.size(); ++i) {
      const double v = img.pixels()[i];
      dot += v * mean[i];
      norm += v * v;
    }
    if (norm == 0) throw ConfigError("patched image is the zero vector");
    scores.push_back(std::clamp(dot / (std::sqrt(norm) * mean_norm), -1.0, 1.0));
  }
  return scores;
}

}  // namespace covertex

template <>
struct std::hash<covertex::AddressSpec> : covertex::AddressSpecHash {};
