#include "hazardpipe/detect/calibration.hpp"

#include <algorithm>

namespace hazardpipe {

CalibrationTable CalibrationTable::identity() { return CalibrationTable({{0.0, 0.0}, {1.0, 1.0}}); }

CalibrationTable CalibrationTable::from_bins(const std::array<std::int64_t, kReliabilityBins>& totals,
                                             const std::array<std::int64_t, kReliabilityBins>& confirmed) {
  struct Block {
    double weight;
    double value;
    std::vector<double> centers;
  };
  std::vector<Block> blocks;
  for (int b = 0; b < kReliabilityBins; ++b) {
    if (totals[b] <= 0) continue;
    const double center = (b + 0.5) / kReliabilityBins;
    blocks.push_back({static_cast<double>(totals[b]),
                      static_cast<double>(confirmed[b]) / static_cast<double>(totals[b]),
                      {center}});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].value > blocks.back().value) {
      Block top = std::move(blocks.back());
      blocks.pop_back();
      Block& prev = blocks.back();
      prev.value = (prev.value * prev.weight + top.value * top.weight) / (prev.weight + top.weight);
      prev.weight += top.weight;
      prev.centers.insert(prev.centers.end(), top.centers.begin(), top.centers.end());
    }
  }
  if (blocks.empty()) return identity();
  std::vector<std::pair<double, double>> knots;
  for (const auto& blk : blocks) {
    for (double c : blk.centers) knots.emplace_back(c, blk.value);
  }
  knots.insert(knots.begin(), {0.0, knots.front().second});
  knots.emplace_back(1.0, knots.back().second);
  return CalibrationTable(std::move(knots));
}

double CalibrationTable::calibrated(double raw) const {
  raw = std::clamp(raw, 0.0, 1.0);
  auto it = std::lower_bound(knots_.begin(), knots_.end(), raw,
                             [](const std::pair<double, double>& k, double x) { return k.first < x; });
  if (it == knots_.begin()) return it->second;
  if (it == knots_.end()) return knots_.back().second;
  const auto& [x1, y1] = *it;
  const auto& [x0, y0] = *(it - 1);
  if (x1 == x0) return y1;
  return std::clamp(y0 + (y1 - y0) * (raw - x0) / (x1 - x0), 0.0, 1.0);
}

double calibrate_uncertainty(double raw_score, const CalibrationTable& table) {
  return 1.0 - table.calibrated(raw_score);
}

void to_json(nlohmann::json& j, const CalibrationTable& t) {
  j = nlohmann::json::array();
  for (const auto& [x, y] : t.knots()) j.push_back({x, y});
}

}  // namespace hazardpipe
