#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace hazardpipe {

inline constexpr int kReliabilityBins = 10;

// Monotone piecewise-linear map from raw detector score to calibrated
// probability of the detection being confirmed.
class CalibrationTable {
 public:
  static CalibrationTable identity();

  // Builds the map from reliability-bin counts (10 equal-width bins over
  // [0,1]). Empty bins are skipped, bin accuracies are made monotone by
  // pool-adjacent-violators, and knots sit at bin centres with flat
  // extension to 0 and 1. With no data at all the identity map is returned.
  static CalibrationTable from_bins(const std::array<std::int64_t, kReliabilityBins>& totals,
                                    const std::array<std::int64_t, kReliabilityBins>& confirmed);

  double calibrated(double raw_score) const;
  const std::vector<std::pair<double, double>>& knots() const { return knots_; }

 private:
  explicit CalibrationTable(std::vector<std::pair<double, double>> knots) : knots_(std::move(knots)) {}
  std::vector<std::pair<double, double>> knots_;
};

inline int reliability_bin(double score) {
  const int b = static_cast<int>(score * kReliabilityBins);
  return b < 0 ? 0 : (b >= kReliabilityBins ? kReliabilityBins - 1 : b);
}

// 1 - calibrated probability; non-increasing in raw_score.
double calibrate_uncertainty(double raw_score, const CalibrationTable& table);

void to_json(nlohmann::json& j, const CalibrationTable& t);

}  // namespace hazardpipe
