#include "hazardpipe/sim/mock_detector.hpp"

#include <algorithm>
#include <cmath>

#include "hazardpipe/core/error.hpp"
#include "hazardpipe/sim/random.hpp"

namespace hazardpipe::sim {

namespace {

BoundingBox jitter(const BoundingBox& b, const std::array<double, 4>& u, double px, int width, int height) {
  if (px <= 0.0) return b;
  double x0 = std::clamp(b.x_min() + (2 * u[0] - 1) * px, 0.0, static_cast<double>(width - 1));
  double y0 = std::clamp(b.y_min() + (2 * u[1] - 1) * px, 0.0, static_cast<double>(height - 1));
  double x1 = std::clamp(b.x_max() + (2 * u[2] - 1) * px, x0 + 1.0, static_cast<double>(width));
  double y1 = std::clamp(b.y_max() + (2 * u[3] - 1) * px, y0 + 1.0, static_cast<double>(height));
  return BoundingBox::make(x0, y0, x1, y1);
}

HazardClass confused_class(const ConfusionMatrix& m, HazardClass truth, double u) {
  const std::size_t t = class_index(truth);
  double off = 0.0;
  for (std::size_t j = 0; j < kNumHazardClasses; ++j) {
    if (j != t) off += m[t][j];
  }
  double acc = 0.0;
  std::size_t last = t;
  for (std::size_t j = 0; j < kNumHazardClasses; ++j) {
    if (j == t) continue;
    last = j;
    acc += off > 0.0 ? m[t][j] / off : 1.0 / (kNumHazardClasses - 1);
    if (u < acc) return kAllHazardClasses[j];
  }
  return kAllHazardClasses[last];
}

bool intersects(const BoundingBox& a, const BoundingBox& b) {
  return a.x_min() < b.x_max() && b.x_min() < a.x_max() && a.y_min() < b.y_max() && b.y_min() < a.y_max();
}

// Fate of a truth box for a given miss rate: 0 kept, 1 confused, 2 missed.
int fate_of(const TruthBox& t, double miss_rate, const ConfusionMatrix& m) {
  if (t.u_fate < miss_rate) return 2;
  const double d = m[class_index(t.hazard_class)][class_index(t.hazard_class)];
  if (t.u_fate < miss_rate + (1.0 - miss_rate) * (1.0 - d)) return 1;
  return 0;
}

void add_false_positives(const ImageDescriptor& img, int count, double lo, double hi, Rng& rng,
                         std::vector<MockDetection>& out) {
  for (int k = 0; k < count; ++k) {
    std::optional<BoundingBox> placed;
    BoundingBox box = BoundingBox::make(0, 0, 1, 1);
    for (int attempt = 0; attempt < 100; ++attempt) {
      const int w = 48 + static_cast<int>(rng.below(113));
      const int h = 48 + static_cast<int>(rng.below(113));
      const int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(img.width - w + 1)));
      const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(img.height - h + 1)));
      box = BoundingBox::make(x, y, x + w, y + h);
      const bool clear = std::none_of(img.truths.begin(), img.truths.end(),
                                      [&](const TruthBox& t) { return intersects(t.box, box); });
      if (clear) {
        placed = box;
        break;
      }
    }
    HazardClass cls = kAllHazardClasses[rng.below(kNumHazardClasses)];
    if (!placed) {
      // No free space: use a class absent from the image so it cannot match.
      for (HazardClass c : kAllHazardClasses) {
        const bool present = std::any_of(img.truths.begin(), img.truths.end(),
                                         [&](const TruthBox& t) { return t.hazard_class == c; });
        if (!present) {
          cls = c;
          break;
        }
      }
    }
    const double score = lo + (hi - lo) * rng.uniform();
    out.push_back({RawDetection{box, cls, score}, DetectionFate::FalsePositive, std::nullopt});
  }
}

}  // namespace

std::vector<MockDetection> mock_detect_full(const ImageDescriptor& img, const DetectorErrorModel& model,
                                            double threshold) {
  std::vector<MockDetection> out;
  for (std::size_t i = 0; i < img.truths.size(); ++i) {
    const auto& t = img.truths[i];
    const int fate = fate_of(t, model.miss_rate, model.confusion);
    const auto box = jitter(t.box, t.u_jitter, model.localization_jitter_px, img.width, img.height);
    if (fate == 2) {
      if (t.u_low < model.low_score_recall) {
        out.push_back({RawDetection{box, t.hazard_class, 0.05 + 0.45 * t.u_score}, DetectionFate::Missed, i});
      }
    } else if (fate == 1) {
      out.push_back({RawDetection{box, confused_class(model.confusion, t.hazard_class, t.u_confuse),
                                  0.5 + 0.45 * t.u_score},
                     DetectionFate::Confused, i});
    } else {
      out.push_back({RawDetection{box, t.hazard_class, std::min(0.999, 0.5 + 0.5 * std::sqrt(t.u_score))},
                     DetectionFate::TruePositive, i});
    }
  }
  Rng rng(img.noise_seed);
  add_false_positives(img, poisson_quantile(img.u_fp, model.false_positive_rate), 0.5, 0.8, rng, out);
  add_false_positives(img, poisson_quantile(img.u_fp_low, model.low_score_fp_rate), 0.05, 0.5, rng, out);
  out.erase(std::remove_if(out.begin(), out.end(), [&](const MockDetection& d) { return d.raw.score < threshold; }),
            out.end());
  return out;
}

std::vector<RawDetection> mock_detect(const ImageDescriptor& image, const DetectorErrorModel& model,
                                      double threshold) {
  std::vector<RawDetection> out;
  for (auto& d : mock_detect_full(image, model, threshold)) out.push_back(d.raw);
  return out;
}

DetectorCalibration calibrate_error_model(const Scenario& scenario, const DetectorErrorModel& base,
                                          const CalibrationTargets& targets) {
  DetectorCalibration cal;
  cal.model = base;
  cal.truths = scenario.truth_count();
  auto counts = [&](double m) {
    std::size_t tp = 0, confused = 0;
    for (const auto& img : scenario.images) {
      for (const auto& t : img.truths) {
        const int f = fate_of(t, m, base.confusion);
        if (f == 0) ++tp;
        if (f == 1) ++confused;
      }
    }
    return std::pair{tp, confused};
  };
  const auto target_tp = static_cast<std::size_t>(std::llround(targets.recall * static_cast<double>(cal.truths)));
  double lo = 0.0, hi = 1.0;
  if (counts(0.0).first <= target_tp) {
    hi = 0.0;
  } else {
    for (int it = 0; it < 80; ++it) {
      const double mid = (lo + hi) / 2;
      if (counts(mid).first > target_tp) lo = mid;
      else hi = mid;
    }
  }
  cal.model.miss_rate = hi;
  std::tie(cal.true_positives, cal.confused) = counts(hi);

  const double tp = static_cast<double>(cal.true_positives);
  const double wanted_fp = std::max(0.0, tp / targets.box_precision - tp - static_cast<double>(cal.confused));
  const auto target_fp = static_cast<std::size_t>(std::llround(wanted_fp));
  auto fp_total = [&](double lambda) {
    std::size_t n = 0;
    for (const auto& img : scenario.images) n += static_cast<std::size_t>(poisson_quantile(img.u_fp, lambda));
    return n;
  };
  double lam_lo = 0.0, lam_hi = 50.0;
  if (target_fp == 0) {
    lam_hi = 0.0;
  } else {
    for (int it = 0; it < 80; ++it) {
      const double mid = (lam_lo + lam_hi) / 2;
      if (fp_total(mid) >= target_fp) lam_hi = mid;
      else lam_lo = mid;
    }
    // Take whichever side of the step lands closer to the target.
    const auto above = fp_total(lam_hi), below = fp_total(lam_lo);
    if (target_fp - below < above - target_fp) lam_hi = lam_lo;
  }
  cal.model.false_positive_rate = lam_hi;
  cal.false_positives = fp_total(lam_hi);
  const double emitted = tp + static_cast<double>(cal.confused + cal.false_positives);
  cal.expected_precision = emitted > 0 ? tp / emitted : 1.0;
  cal.expected_recall = cal.truths > 0 ? tp / static_cast<double>(cal.truths) : 1.0;
  return cal;
}

// ---------------------------------------------------------------------------

std::vector<double> saliency_grid(const RgbImage& image, int cell_px, const std::array<std::uint8_t, 3>& reference,
                                  int& rows, int& cols) {
  rows = std::max(1, image.height / cell_px);
  cols = std::max(1, image.width / cell_px);
  std::vector<double> grid(static_cast<std::size_t>(rows) * cols, 0.0);
  std::vector<std::size_t> counts(grid.size(), 0);
  for (int y = 0; y < image.height; ++y) {
    const int r = std::min(rows - 1, y / cell_px);
    for (int x = 0; x < image.width; ++x) {
      const int c = std::min(cols - 1, x / cell_px);
      const auto* p = image.at(x, y);
      double d2 = 0.0;
      for (int k = 0; k < 3; ++k) {
        const double d = static_cast<double>(p[k]) - reference[k];
        d2 += d * d;
      }
      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
      grid[i] += std::sqrt(d2) / 441.6729559300637;
      ++counts[i];
    }
  }
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] /= static_cast<double>(std::max<std::size_t>(counts[i], 1));
  return grid;
}

double saliency_score(const RgbImage& image, const BoundingBox& box, const std::array<std::uint8_t, 3>& reference) {
  const int x0 = std::max(0, static_cast<int>(std::floor(box.x_min())));
  const int y0 = std::max(0, static_cast<int>(std::floor(box.y_min())));
  const int x1 = std::min(image.width, static_cast<int>(std::ceil(box.x_max())));
  const int y1 = std::min(image.height, static_cast<int>(std::ceil(box.y_max())));
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const auto* p = image.at(x, y);
      double d2 = 0.0;
      for (int k = 0; k < 3; ++k) {
        const double d = static_cast<double>(p[k]) - reference[k];
        d2 += d * d;
      }
      sum += std::sqrt(d2) / 441.6729559300637;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

namespace {

HazardClass class_from_colour(double r, double g, double b) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  if (mx < 64.0) return HazardClass::RubberWaste;  // dark
  if (mx - mn < 24.0) return HazardClass::Other;   // grey
  double hue;
  if (mx == r) hue = 60.0 * std::fmod((g - b) / (mx - mn), 6.0);
  else if (mx == g) hue = 60.0 * ((b - r) / (mx - mn) + 2.0);
  else hue = 60.0 * ((r - g) / (mx - mn) + 4.0);
  if (hue < 0) hue += 360.0;
  if (hue >= 180.0 && hue < 260.0) return HazardClass::PlasticFoil;
  if (hue >= 330.0 || hue < 30.0) return HazardClass::MetalCan;
  if (hue < 180.0) return HazardClass::MixedWaste;
  return HazardClass::Other;
}

struct Component {
  std::vector<std::size_t> cells;
  HazardClass hazard_class;
  double mean_saliency;
};

std::vector<Component> salient_components(const RgbImage& image, const PixelDetectorConfig& cfg, int& rows,
                                          int& cols, std::vector<double>& grid) {
  grid = saliency_grid(image, cfg.cell_px, mean_color(image), rows, cols);
  std::vector<int> label(grid.size(), -1);
  std::vector<Component> comps;
  for (std::size_t start = 0; start < grid.size(); ++start) {
    if (label[start] >= 0 || grid[start] < cfg.saliency_threshold) continue;
    Component comp;
    std::vector<std::size_t> stack{start};
    label[start] = static_cast<int>(comps.size());
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      comp.cells.push_back(i);
      const int r = static_cast<int>(i) / cols, c = static_cast<int>(i) % cols;
      const int nr[4] = {r - 1, r + 1, r, r}, nc[4] = {c, c, c - 1, c + 1};
      for (int k = 0; k < 4; ++k) {
        if (nr[k] < 0 || nr[k] >= rows || nc[k] < 0 || nc[k] >= cols) continue;
        const std::size_t j = static_cast<std::size_t>(nr[k]) * cols + nc[k];
        if (label[j] < 0 && grid[j] >= cfg.saliency_threshold) {
          label[j] = label[start];
          stack.push_back(j);
        }
      }
    }
    std::sort(comp.cells.begin(), comp.cells.end());
    double rs = 0, gs = 0, bs = 0, sal = 0;
    std::size_t n = 0;
    for (std::size_t i : comp.cells) {
      sal += grid[i];
      const int r = static_cast<int>(i) / cols, c = static_cast<int>(i) % cols;
      for (int y = r * cfg.cell_px; y < std::min(image.height, (r + 1) * cfg.cell_px); ++y) {
        for (int x = c * cfg.cell_px; x < std::min(image.width, (c + 1) * cfg.cell_px); ++x) {
          const auto* p = image.at(x, y);
          rs += p[0];
          gs += p[1];
          bs += p[2];
          ++n;
        }
      }
    }
    const double dn = static_cast<double>(std::max<std::size_t>(n, 1));
    comp.hazard_class = class_from_colour(rs / dn, gs / dn, bs / dn);
    comp.mean_saliency = sal / static_cast<double>(comp.cells.size());
    comps.push_back(std::move(comp));
  }
  return comps;
}

}  // namespace

MockDetector::MockDetector(const Scenario& scenario, DetectorErrorModel model, double threshold)
    : scenario_(&scenario), model_(std::move(model)), threshold_(threshold) {
  for (std::size_t i = 0; i < scenario.images.size(); ++i) index_[scenario.images[i].image_id] = i;
}

MockDetector::MockDetector(const BlobStore& blobs, PixelDetectorConfig config) : blobs_(&blobs), pixel_(config) {}

DetectorCapabilities MockDetector::capabilities() const {
  DetectorCapabilities caps;
  caps.classes.assign(kAllHazardClasses.begin(), kAllHazardClasses.end());
  caps.activations = true;
  return caps;
}

const ImageDescriptor& MockDetector::descriptor(const std::string& ref) const {
  auto it = index_.find(ref);
  if (it == index_.end()) throw Error("DetectorFailure", "unknown image " + ref);
  return scenario_->images[it->second];
}

std::vector<RawDetection> MockDetector::detect(const ImageInput& image) {
  if (scenario_) return mock_detect(descriptor(image.image_ref), model_, threshold_);
  try {
    return detect_pixels(decode_image(blobs_->get(image.image_ref)));
  } catch (const Error& e) {
    throw Error("DetectorFailure", e.what());
  }
}

std::optional<FeatureStack> MockDetector::activations(const ImageInput& image) {
  if (scenario_) {
    const auto& d = descriptor(image.image_ref);
    return synth_features(d, scenario_->config.feature_rows, scenario_->config.feature_cols);
  }
  return pixel_activations(decode_image(blobs_->get(image.image_ref)));
}

std::vector<RawDetection> MockDetector::detect_pixels(const RgbImage& image) const {
  int rows = 0, cols = 0;
  std::vector<double> grid;
  std::vector<RawDetection> out;
  for (const auto& comp : salient_components(image, pixel_, rows, cols, grid)) {
    if (static_cast<int>(comp.cells.size()) < pixel_.min_cells) continue;
    int r0 = rows, r1 = -1, c0 = cols, c1 = -1;
    for (std::size_t i : comp.cells) {
      const int r = static_cast<int>(i) / cols, c = static_cast<int>(i) % cols;
      r0 = std::min(r0, r);
      r1 = std::max(r1, r);
      c0 = std::min(c0, c);
      c1 = std::max(c1, c);
    }
    const auto box = BoundingBox::make(c0 * pixel_.cell_px, r0 * pixel_.cell_px,
                                       std::min(image.width, (c1 + 1) * pixel_.cell_px),
                                       std::min(image.height, (r1 + 1) * pixel_.cell_px));
    out.push_back({box, comp.hazard_class, std::min(0.99, 0.4 + comp.mean_saliency)});
  }
  return out;
}

FeatureStack MockDetector::pixel_activations(const RgbImage& image) const {
  int rows = 0, cols = 0;
  std::vector<double> grid;
  const auto comps = salient_components(image, pixel_, rows, cols, grid);
  FeatureStack f;
  f.rows = rows;
  f.cols = cols;
  f.channels.assign(kNumHazardClasses, std::vector<double>(grid.size()));
  for (std::size_t k = 0; k < kNumHazardClasses; ++k) {
    for (std::size_t i = 0; i < grid.size(); ++i) f.channels[k][i] = 0.1 * grid[i];
  }
  for (const auto& comp : comps) {
    for (std::size_t i : comp.cells) f.channels[class_index(comp.hazard_class)][i] = grid[i];
  }
  for (HazardClass c : kAllHazardClasses) {
    std::vector<double> w(kNumHazardClasses, -0.2);
    w[class_index(c)] = 1.0;
    f.class_weights[c] = std::move(w);
  }
  return f;
}

}  // namespace hazardpipe::sim
