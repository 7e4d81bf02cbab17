#include "support.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <random>

#include <gtest/gtest.h>

#include "hazardpipe/ingest/exif.hpp"

namespace hptest {

namespace {

std::mutex tally_mutex;
BlobScanTally tally;

}  // namespace

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path_ = std::filesystem::temp_directory_path() /
          ("hazardpipe-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  const auto t = scan_blobs(path_);
  if (t.with_gps > 0) ADD_FAILURE() << t.with_gps << " blob(s) under " << path_ << " still carry GPS EXIF";
  {
    std::lock_guard lock(tally_mutex);
    tally.scanned += t.scanned;
    tally.with_gps += t.with_gps;
  }
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

BlobScanTally blob_scan_tally() {
  std::lock_guard lock(tally_mutex);
  return tally;
}

BlobScanTally scan_blobs(const std::filesystem::path& root) {
  BlobScanTally t;
  std::error_code ec;
  for (auto it = std::filesystem::recursive_directory_iterator(root, ec);
       !ec && it != std::filesystem::recursive_directory_iterator(); ++it) {
    if (!it->is_regular_file()) continue;
    const auto rel = std::filesystem::relative(it->path(), root).string();
    if (rel.find("blobs/") == std::string::npos) continue;
    std::ifstream in(it->path(), std::ios::binary);
    const Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ++t.scanned;
    if (sniff_format(data) && has_gps_exif(data)) ++t.with_gps;
  }
  return t;
}

RgbImage test_image(int width, int height, std::uint32_t seed) {
  RgbImage img(width, height);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 6.283185307179586);
  const double p1 = phase(rng), p2 = phase(rng), p3 = phase(rng);
  const double f1 = 2.0 + seed % 5, f2 = 3.0 + seed % 7;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double u = static_cast<double>(x) / width, v = static_cast<double>(y) / height;
      auto* px = img.at(x, y);
      px[0] = static_cast<std::uint8_t>(127.5 + 127.0 * std::sin(f1 * 6.28318 * u + p1));
      px[1] = static_cast<std::uint8_t>(127.5 + 127.0 * std::sin(f2 * 6.28318 * v + p2));
      px[2] = static_cast<std::uint8_t>(127.5 + 127.0 * std::sin(f1 * 6.28318 * (u + v) + p3));
    }
  }
  return img;
}

RgbImage image_with_patch(int width, int height, int x0, int y0, int x1, int y1,
                          std::array<std::uint8_t, 3> colour) {
  RgbImage img(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      auto* px = img.at(x, y);
      const bool inside = x >= x0 && x < x1 && y >= y0 && y < y1;
      for (int c = 0; c < 3; ++c) px[c] = inside ? colour[c] : static_cast<std::uint8_t>(200 - (x + y) % 7);
    }
  }
  return img;
}

Bytes jpeg_with_gps(const RgbImage& image, double lat, double lon, int quality) {
  ExifFields f;
  f.gps = make_geopoint(lat, lon);
  f.make = "TestCam";
  f.orientation = 1;
  return insert_exif(encode_jpeg(image, quality), build_exif_payload(f));
}

std::filesystem::path data_path(const std::string& name) { return std::filesystem::path(HAZARDPIPE_TEST_DATA) / name; }

}  // namespace hptest
