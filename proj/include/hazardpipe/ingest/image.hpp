#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace hazardpipe {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

enum class ImageFormat { Jpeg, Png };

// Interleaved 8-bit RGB, row-major, origin top-left.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::uint8_t* at(int x, int y) { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* at(int x, int y) const {
    return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

// Magic-byte sniffing; nullopt for anything that is not JPEG or PNG.
std::optional<ImageFormat> sniff_format(ByteView bytes);

// Decodes JPEG or PNG to RGB. Throws Error{"MalformedImage"}.
RgbImage decode_image(ByteView bytes);

Bytes encode_png(const RgbImage& image);
Bytes encode_jpeg(const RgbImage& image, int quality);

// Mean colour over all pixels, rounded to nearest.
std::array<std::uint8_t, 3> mean_color(const RgbImage& image);

}  // namespace hazardpipe
