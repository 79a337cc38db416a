#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "covertex/address_space.hpp"
#include "covertex/image.hpp"
#include "covertex/rng.hpp"

namespace covertex {

// Stand-ins for dataset images, so covert renders and image payloads can be
// exercised without shipping a dataset.

namespace detail {

// Seven-segment layout: a top, b upper right, c lower right, d bottom,
// e lower left, f upper left, g middle.
inline constexpr std::array<std::uint8_t, 10> kSegments = {
    0b1111110, 0b0110000, 0b1101101, 0b1111001, 0b0110011,
    0b1011011, 0b1011111, 0b1110000, 0b1111111, 0b1111011,
};

inline void box_blur(ImageBuffer& img) {
  const ImageBuffer src = img;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) {
        int sum = 0, n = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int xx = x + dx, yy = y + dy;
            if (xx < 0 || yy < 0 || xx >= img.width() || yy >= img.height()) continue;
            sum += src.at(xx, yy, c);
            ++n;
          }
        img.at(x, y, c) = static_cast<std::uint8_t>((sum + n / 2) / n);
      }
}

}  // namespace detail

// A handwritten-looking digit: seven-segment strokes with per-sample jitter
// in position, stroke width and intensity, softened by a box blur. The glyph
// stays inside the central region, away from the patch slots.
inline LabeledImage synthetic_digit(int label, const ImageShape& shape, std::uint64_t seed) {
  if (label < 0 || label > 9) throw ConfigError("digit label must be in [0,9]");
  Rng rng = make_rng(seed, {0xD161, std::uint64_t(label)});
  ImageBuffer img(shape);
  const int w = shape.width, h = shape.height;
  const int jx = static_cast<int>(uniform_below(rng, 3)) - 1;
  const int jy = static_cast<int>(uniform_below(rng, 3)) - 1;
  const int left = w * 3 / 10 + jx, right = w * 7 / 10 + jx;
  const int top = h / 5 + jy, bottom = h * 4 / 5 + jy, mid = (top + bottom) / 2;
  const int thick = 2 + static_cast<int>(uniform_below(rng, 2));
  const std::uint8_t ink = static_cast<std::uint8_t>(200 + uniform_below(rng, 56));
  const double slant = (uniform01(rng) - 0.5) * 0.3;

  auto plot = [&](int x, int y) {
    const int sx = x + static_cast<int>(std::lround(slant * (mid - y)));
    for (int dy = 0; dy < thick; ++dy)
      for (int dx = 0; dx < thick; ++dx) {
        const int xx = sx + dx, yy = y + dy;
        if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
        for (int c = 0; c < shape.channels; ++c) img.at(xx, yy, c) = ink;
      }
  };
  auto hline = [&](int y) {
    for (int x = left; x <= right; ++x) plot(x, y);
  };
  auto vline = [&](int x, int y0, int y1) {
    for (int y = y0; y <= y1; ++y) plot(x, y);
  };

  const std::uint8_t seg = detail::kSegments[static_cast<std::size_t>(label)];
  if (seg & 0b1000000) hline(top);
  if (seg & 0b0100000) vline(right, top, mid);
  if (seg & 0b0010000) vline(right, mid, bottom);
  if (seg & 0b0001000) hline(bottom);
  if (seg & 0b0000100) vline(left, mid, bottom);
  if (seg & 0b0000010) vline(left, top, mid);
  if (seg & 0b0000001) hline(mid);
  detail::box_blur(img);
  return LabeledImage{std::move(img), label};
}

// Smooth, photo-like content: a few low-frequency waves over a gradient with
// mild pixel noise.
inline ImageBuffer synthetic_natural(const ImageShape& shape, std::uint64_t seed) {
  Rng rng = make_rng(seed, {0x9A7});
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::vector<Wave> waves;
  for (int i = 0; i < 5; ++i)
    waves.push_back(Wave{uniform01(rng) * 4.0, uniform01(rng) * 4.0, uniform01(rng) * 2 * std::numbers::pi,
                         20.0 + uniform01(rng) * 30.0});
  ImageBuffer img(shape);
  for (int y = 0; y < shape.height; ++y)
    for (int x = 0; x < shape.width; ++x)
      for (int c = 0; c < shape.channels; ++c) {
        const double u = static_cast<double>(x) / shape.width, v = static_cast<double>(y) / shape.height;
        double val = 60.0 + 120.0 * (0.6 * u + 0.4 * v) + 10.0 * c;
        for (const auto& wv : waves)
          val += wv.amp * std::sin(2 * std::numbers::pi * (wv.fx * u + wv.fy * v) + wv.phase + c);
        val += (uniform01(rng) - 0.5) * 6.0;
        img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(val), 0L, 255L));
      }
  return img;
}

// Background of the class a covert address asks for.
inline LabeledImage background_for(const AddressSpec& a, const ImageShape& shape, std::uint64_t seed) {
  return synthetic_digit(covert_pattern(a).background_class, shape, seed);
}

}  // namespace covertex
