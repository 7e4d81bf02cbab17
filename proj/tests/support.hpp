#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "hazardpipe/core/types.hpp"
#include "hazardpipe/ingest/image.hpp"

namespace hptest {

using namespace hazardpipe;

// Scratch directory removed on destruction. Before removal every file under
// a `blobs/` subtree is scanned; any blob still carrying GPS EXIF fails the
// running test.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Number of blob files scanned so far by TempDir destructors, and how many
// carried GPS tags.
struct BlobScanTally {
  std::size_t scanned = 0;
  std::size_t with_gps = 0;
};
BlobScanTally blob_scan_tally();
BlobScanTally scan_blobs(const std::filesystem::path& root);

// Deterministic textured test image. Different seeds can still land within
// the dhash duplicate threshold of each other.
RgbImage test_image(int width, int height, std::uint32_t seed);
// Plain background with one saturated rectangle.
RgbImage image_with_patch(int width, int height, int x0, int y0, int x1, int y1,
                          std::array<std::uint8_t, 3> colour);

Bytes jpeg_with_gps(const RgbImage& image, double lat, double lon, int quality = 90);

std::filesystem::path data_path(const std::string& name);

}  // namespace hptest
