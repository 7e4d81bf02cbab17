#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hazardpipe/core/types.hpp"
#include "hazardpipe/detect/backend.hpp"
#include "hazardpipe/ingest/image.hpp"

namespace hazardpipe {

struct CamHeatmap {
  int rows = 0;
  int cols = 0;
  std::vector<double> grid;  // rows x cols, values in [0,1]
  int width = 0;             // upsampled size; 0 when not requested
  int height = 0;
  std::vector<float> upsampled;
  std::pair<int, int> peak{0, 0};  // (row, col) of the grid argmax, first in row-major order

  double at(int r, int c) const { return grid[static_cast<std::size_t>(r) * cols + c]; }
};

// raw(i,j) = max(0, sum_k w_k F_k(i,j)) for the class's weight vector,
// min-max normalised to [0,1] (all zeros when flat), then bilinearly
// upsampled to width x height when both are positive.
// Throws Error{"UnknownClass"} when the class has no weight vector.
CamHeatmap cam(const FeatureStack& features, HazardClass hazard_class, int width = 0, int height = 0);

// Bilinear upsampling of a rows x cols grid, sampling at pixel centres.
std::vector<float> upsample_bilinear(const std::vector<double>& grid, int rows, int cols, int width, int height);

// Five-stop gradient 0 blue, .25 cyan, .5 green, .75 yellow, 1 red.
std::array<double, 3> colormap(double h);

// pixel = (1 - a*h) * base + a*h * colormap(h), rounded half up.
RgbImage overlay(const RgbImage& base, const CamHeatmap& heatmap, double alpha = 0.4);

// Grid-only summary stored as the cam artifact.
nlohmann::json cam_summary_json(const CamHeatmap& heatmap);

}  // namespace hazardpipe
