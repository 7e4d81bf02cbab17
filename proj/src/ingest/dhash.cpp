#include "hazardpipe/ingest/dhash.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "hazardpipe/core/error.hpp"

namespace hazardpipe {

namespace {

constexpr int kGridW = 9;
constexpr int kGridH = 8;

double luma(const std::uint8_t* px) { return 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]; }

// Overlap of pixel interval [p, p+1) with cell interval [lo, hi).
double overlap(int p, double lo, double hi) {
  return std::max(0.0, std::min(p + 1.0, hi) - std::max(static_cast<double>(p), lo));
}

}  // namespace

std::uint64_t dhash(const RgbImage& image) {
  if (image.width <= 0 || image.height <= 0) throw Error("MalformedImage", "empty image");
  std::array<double, kGridW * kGridH> grid{};
  const double sx = static_cast<double>(image.width) / kGridW;
  const double sy = static_cast<double>(image.height) / kGridH;
  for (int gy = 0; gy < kGridH; ++gy) {
    const double y0 = gy * sy, y1 = (gy + 1) * sy;
    for (int gx = 0; gx < kGridW; ++gx) {
      const double x0 = gx * sx, x1 = (gx + 1) * sx;
      double sum = 0.0, weight = 0.0;
      for (int y = static_cast<int>(std::floor(y0)); y < std::min(image.height, static_cast<int>(std::ceil(y1))); ++y) {
        const double wy = overlap(y, y0, y1);
        for (int x = static_cast<int>(std::floor(x0)); x < std::min(image.width, static_cast<int>(std::ceil(x1))); ++x) {
          const double w = wy * overlap(x, x0, x1);
          sum += w * luma(image.at(x, y));
          weight += w;
        }
      }
      grid[gy * kGridW + gx] = weight > 0 ? sum / weight : 0.0;
    }
  }
  std::uint64_t hash = 0;
  for (int gy = 0; gy < kGridH; ++gy) {
    for (int gx = 0; gx < kGridW - 1; ++gx) {
      if (grid[gy * kGridW + gx] > grid[gy * kGridW + gx + 1]) {
        hash |= std::uint64_t{1} << (gy * 8 + gx);
      }
    }
  }
  return hash;
}

std::uint64_t dedup_key(ByteView image_bytes) { return dhash(decode_image(image_bytes)); }

}  // namespace hazardpipe
