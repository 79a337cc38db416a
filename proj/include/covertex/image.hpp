#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "covertex/error.hpp"

namespace covertex {

struct ImageShape {
  int width = 28;
  int height = 28;
  int channels = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height) *
           static_cast<std::size_t>(channels);
  }
  bool operator==(const ImageShape&) const = default;
};

// 8-bit image, row-major with channels interleaved per pixel.
class ImageBuffer {
 public:
  ImageBuffer() = default;
  explicit ImageBuffer(ImageShape shape, std::uint8_t fill = 0)
      : shape_(shape), pixels_(checked_size(shape), fill) {}
  ImageBuffer(ImageShape shape, std::vector<std::uint8_t> pixels)
      : shape_(shape), pixels_(std::move(pixels)) {
    if (pixels_.size() != checked_size(shape_))
      throw FramingError("pixel count does not match image shape");
  }

  const ImageShape& shape() const { return shape_; }
  int width() const { return shape_.width; }
  int height() const { return shape_.height; }
  int channels() const { return shape_.channels; }
  std::size_t size() const { return pixels_.size(); }

  std::uint8_t& at(int x, int y, int c = 0) { return pixels_[offset(x, y, c)]; }
  std::uint8_t at(int x, int y, int c = 0) const { return pixels_[offset(x, y, c)]; }

  const std::vector<std::uint8_t>& pixels() const { return pixels_; }
  std::vector<std::uint8_t>& pixels() { return pixels_; }

  bool operator==(const ImageBuffer&) const = default;

 private:
  static std::size_t checked_size(const ImageShape& s) {
    if (s.width <= 0 || s.height <= 0 || (s.channels != 1 && s.channels != 3))
      throw ConfigError("image shape must be positive with 1 or 3 channels");
    return s.size();
  }
  std::size_t offset(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * shape_.width + x) * shape_.channels + c;
  }

  ImageShape shape_{};
  std::vector<std::uint8_t> pixels_;
};

// Binary PGM (P5) for one channel, PPM (P6) for three. maxval is always 255.
inline void write_pnm(const std::filesystem::path& path, const ImageBuffer& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << (img.channels() == 1 ? "P5" : "P6") << '\n'
      << img.width() << ' ' << img.height() << '\n'
      << 255 << '\n';
  out.write(reinterpret_cast<const char*>(img.pixels().data()),
            static_cast<std::streamsize>(img.size()));
  if (!out) throw IoError("short write to " + path.string());
}

namespace detail {

inline int read_pnm_int(std::istream& in) {
  int value = -1;
  for (;;) {
    int ch = in.peek();
    if (ch == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (ch == ' ' || ch == '\n' || ch == '\r' || ch == '\t') {
      in.get();
    } else {
      break;
    }
  }
  if (!(in >> value)) throw FramingError("malformed PNM header");
  return value;
}

}  // namespace detail

inline ImageBuffer read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  int channels = 0;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else throw FramingError(path.string() + ": only binary P5/P6 images are supported");

  const int w = detail::read_pnm_int(in);
  const int h = detail::read_pnm_int(in);
  const int maxval = detail::read_pnm_int(in);
  if (w <= 0 || h <= 0) throw FramingError(path.string() + ": bad dimensions");
  if (maxval != 255) throw FramingError(path.string() + ": maxval must be 255");
  in.get();  // single whitespace before the raster

  ImageShape shape{w, h, channels};
  std::vector<std::uint8_t> px(shape.size());
  in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (static_cast<std::size_t>(in.gcount()) != px.size())
    throw FramingError(path.string() + ": truncated raster");
  return ImageBuffer(shape, std::move(px));
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path,
                             const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace covertex
