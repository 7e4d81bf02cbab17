#include "hazardpipe/explain/cam.hpp"

#include <algorithm>
#include <cmath>

#include "hazardpipe/core/error.hpp"

namespace hazardpipe {

CamHeatmap cam(const FeatureStack& features, HazardClass hazard_class, int width, int height) {
  features.validate();
  auto it = features.class_weights.find(hazard_class);
  if (it == features.class_weights.end()) {
    throw Error("UnknownClass", std::string(hazard_label(hazard_class)) + " has no CAM weights");
  }
  const auto& w = it->second;
  CamHeatmap out;
  out.rows = features.rows;
  out.cols = features.cols;
  const std::size_t cells = static_cast<std::size_t>(out.rows) * out.cols;
  out.grid.assign(cells, 0.0);
  for (std::size_t k = 0; k < features.channels.size(); ++k) {
    const auto& ch = features.channels[k];
    for (std::size_t i = 0; i < cells; ++i) out.grid[i] += w[k] * ch[i];
  }
  double lo = 0.0, hi = 0.0;
  for (std::size_t i = 0; i < cells; ++i) {
    out.grid[i] = std::max(0.0, out.grid[i]);
    if (i == 0 || out.grid[i] < lo) lo = out.grid[i];
    if (i == 0 || out.grid[i] > hi) hi = out.grid[i];
  }
  if (hi > lo) {
    const double span = hi - lo;
    for (auto& v : out.grid) v = (v - lo) / span;
  } else {
    std::fill(out.grid.begin(), out.grid.end(), 0.0);
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < cells; ++i) {
    if (out.grid[i] > out.grid[best]) best = i;
  }
  out.peak = {static_cast<int>(best / out.cols), static_cast<int>(best % out.cols)};
  if (width > 0 && height > 0) {
    out.width = width;
    out.height = height;
    out.upsampled = upsample_bilinear(out.grid, out.rows, out.cols, width, height);
  }
  return out;
}

std::vector<float> upsample_bilinear(const std::vector<double>& grid, int rows, int cols, int width, int height) {
  std::vector<float> out(static_cast<std::size_t>(width) * height);
  const double sy = static_cast<double>(rows) / height;
  const double sx = static_cast<double>(cols) / width;
  // Precompute the horizontal taps once per column.
  std::vector<int> x0(width), x1(width);
  std::vector<double> fx(width);
  for (int x = 0; x < width; ++x) {
    const double gx = std::clamp((x + 0.5) * sx - 0.5, 0.0, cols - 1.0);
    x0[x] = static_cast<int>(gx);
    x1[x] = std::min(x0[x] + 1, cols - 1);
    fx[x] = gx - x0[x];
  }
  for (int y = 0; y < height; ++y) {
    const double gy = std::clamp((y + 0.5) * sy - 0.5, 0.0, rows - 1.0);
    const int y0 = static_cast<int>(gy);
    const int y1 = std::min(y0 + 1, rows - 1);
    const double fy = gy - y0;
    const double* r0 = grid.data() + static_cast<std::size_t>(y0) * cols;
    const double* r1 = grid.data() + static_cast<std::size_t>(y1) * cols;
    float* dst = out.data() + static_cast<std::size_t>(y) * width;
    for (int x = 0; x < width; ++x) {
      const double top = r0[x0[x]] + (r0[x1[x]] - r0[x0[x]]) * fx[x];
      const double bottom = r1[x0[x]] + (r1[x1[x]] - r1[x0[x]]) * fx[x];
      dst[x] = static_cast<float>(std::clamp(top + (bottom - top) * fy, 0.0, 1.0));
    }
  }
  return out;
}

std::array<double, 3> colormap(double h) {
  static constexpr std::array<std::array<double, 3>, 5> kStops = {{
      {0, 0, 255}, {0, 255, 255}, {0, 255, 0}, {255, 255, 0}, {255, 0, 0}}};
  h = std::clamp(h, 0.0, 1.0);
  const double pos = h * 4.0;
  const int i = std::min(3, static_cast<int>(pos));
  const double f = pos - i;
  std::array<double, 3> out{};
  for (int c = 0; c < 3; ++c) out[c] = kStops[i][c] + (kStops[i + 1][c] - kStops[i][c]) * f;
  return out;
}

RgbImage overlay(const RgbImage& base, const CamHeatmap& heatmap, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("InvalidAlpha", "alpha must be in [0,1]");
  std::vector<float> local;
  const std::vector<float>* h = &heatmap.upsampled;
  if (heatmap.width != base.width || heatmap.height != base.height || heatmap.upsampled.empty()) {
    local = upsample_bilinear(heatmap.grid, heatmap.rows, heatmap.cols, base.width, base.height);
    h = &local;
  }
  RgbImage out(base.width, base.height);
  const std::size_t n = static_cast<std::size_t>(base.width) * base.height;
  for (std::size_t i = 0; i < n; ++i) {
    const double hv = (*h)[i];
    const double a = alpha * hv;
    const auto color = colormap(hv);
    for (int c = 0; c < 3; ++c) {
      const double v = (1.0 - a) * base.rgb[i * 3 + c] + a * color[c];
      out.rgb[i * 3 + c] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
    }
  }
  return out;
}

nlohmann::json cam_summary_json(const CamHeatmap& heatmap) {
  return nlohmann::json{{"rows", heatmap.rows},
                        {"cols", heatmap.cols},
                        {"grid", heatmap.grid},
                        {"peak", {heatmap.peak.first, heatmap.peak.second}}};
}

}  // namespace hazardpipe
