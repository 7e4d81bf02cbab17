#include "hazardpipe/explain/lime.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Dense>

namespace hazardpipe {

namespace {

void check_config(const LimeConfig& c) {
  if (c.rows <= 0 || c.cols <= 0) throw Error("InvalidConfig", "segment grid must be positive");
  const int s = c.rows * c.cols;
  if (c.exhaustive && s > 20) throw Error("InvalidConfig", "exhaustive sampling limited to 20 segments");
  if (!c.exhaustive && c.n_samples < s) throw Error("InvalidConfig", "n_samples must be at least the segment count");
  if (!(c.kernel_width > 0.0)) throw Error("InvalidConfig", "kernel_width must be positive");
  if (!(c.ridge >= 0.0)) throw Error("InvalidConfig", "ridge must be non-negative");
}

std::vector<std::vector<std::uint8_t>> draw_masks(const LimeConfig& c) {
  const int s = c.rows * c.cols;
  std::vector<std::vector<std::uint8_t>> masks;
  if (c.exhaustive) {
    const std::uint64_t n = 1ull << s;
    masks.reserve(n);
    for (std::uint64_t m = 0; m < n; ++m) {
      std::vector<std::uint8_t> z(s);
      for (int i = 0; i < s; ++i) z[i] = (m >> i) & 1u;
      masks.push_back(std::move(z));
    }
    return masks;
  }
  std::mt19937_64 rng(c.seed);
  masks.reserve(c.n_samples);
  masks.emplace_back(s, 1);
  for (int n = 1; n < c.n_samples; ++n) {
    std::vector<std::uint8_t> z(s);
    std::uint64_t bits = 0;
    for (int i = 0; i < s; ++i) {
      if (i % 64 == 0) bits = rng();
      z[i] = bits & 1u;
      bits >>= 1;
    }
    masks.push_back(std::move(z));
  }
  return masks;
}

std::vector<int> rank_segments(const std::vector<double>& w, int k) {
  std::vector<int> ids(w.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::stable_sort(ids.begin(), ids.end(),
                   [&](int a, int b) { return std::fabs(w[a]) > std::fabs(w[b]); });
  ids.resize(std::min<std::size_t>(ids.size(), static_cast<std::size_t>(std::max(k, 0))));
  return ids;
}

}  // namespace

double lime_kernel(const std::vector<std::uint8_t>& z, double kernel_width) {
  const double on = static_cast<double>(std::count(z.begin(), z.end(), 1)) / static_cast<double>(z.size());
  const double d = 1.0 - on;
  return std::exp(-(d * d) / (kernel_width * kernel_width));
}

LimeExplanation lime_fit(const MaskPredictor& predict, const LimeConfig& config) {
  check_config(config);
  const int s = config.rows * config.cols;
  const auto masks = draw_masks(config);
  const auto n = static_cast<Eigen::Index>(masks.size());

  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    try {
      y(i) = predict(masks[i]);
    } catch (const std::exception& e) {
      throw PredictorFailure(e.what(), static_cast<std::size_t>(i));
    }
  }

  // Normal equations of the weighted ridge problem with an unpenalised
  // intercept in column 0.
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(s + 1, s + 1);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(s + 1);
  Eigen::VectorXd x(s + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = lime_kernel(masks[i], config.kernel_width);
    x(0) = 1.0;
    for (int j = 0; j < s; ++j) x(j + 1) = masks[i][j];
    a.selfadjointView<Eigen::Lower>().rankUpdate(x, w);
    b += w * y(i) * x;
  }
  a.triangularView<Eigen::StrictlyUpper>() = a.transpose();
  for (int j = 1; j <= s; ++j) a(j, j) += config.ridge;
  const Eigen::VectorXd beta = a.ldlt().solve(b);

  LimeExplanation out;
  out.rows = config.rows;
  out.cols = config.cols;
  out.intercept = beta(0);
  out.cell_importance.assign(beta.data() + 1, beta.data() + 1 + s);
  out.n_samples = static_cast<int>(n);
  out.kernel_width = config.kernel_width;
  out.top_k = rank_segments(out.cell_importance, config.top_k);
  return out;
}

std::vector<PixelRect> segment_box(const BoundingBox& box, int rows, int cols) {
  const int x0 = static_cast<int>(std::floor(box.x_min()));
  const int y0 = static_cast<int>(std::floor(box.y_min()));
  const int x1 = static_cast<int>(std::ceil(box.x_max()));
  const int y1 = static_cast<int>(std::ceil(box.y_max()));
  if (x1 - x0 < cols || y1 - y0 < rows) throw Error("InvalidConfig", "box smaller than the segment grid");
  std::vector<PixelRect> out;
  out.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      out.push_back({x0 + (x1 - x0) * c / cols, y0 + (y1 - y0) * r / rows, x0 + (x1 - x0) * (c + 1) / cols,
                     y0 + (y1 - y0) * (r + 1) / rows});
    }
  }
  return out;
}

RgbImage apply_mask(const RgbImage& image, const std::vector<PixelRect>& segments,
                    const std::vector<std::uint8_t>& z, const std::array<std::uint8_t, 3>& fill) {
  RgbImage out = image;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    if (z[s]) continue;
    const auto& r = segments[s];
    for (int y = r.y0; y < r.y1; ++y) {
      for (int x = r.x0; x < r.x1; ++x) {
        auto* p = out.at(x, y);
        p[0] = fill[0];
        p[1] = fill[1];
        p[2] = fill[2];
      }
    }
  }
  return out;
}

LimeExplanation lime_explain(const ImagePredictor& predict, const RgbImage& image, const BoundingBox& box,
                             const LimeConfig& config) {
  if (box.x_max() > image.width || box.y_max() > image.height) {
    throw Error("BoxOutOfBounds", "box exceeds image bounds");
  }
  check_config(config);
  const auto segments = segment_box(box, config.rows, config.cols);
  const auto fill = mean_color(image);
  return lime_fit([&](const std::vector<std::uint8_t>& z) { return predict(apply_mask(image, segments, z, fill)); },
                  config);
}

nlohmann::json to_json(const LimeExplanation& e) {
  return nlohmann::json{{"rows", e.rows},
                        {"cols", e.cols},
                        {"cell_importance", e.cell_importance},
                        {"intercept", e.intercept},
                        {"n_samples", e.n_samples},
                        {"kernel_width", e.kernel_width},
                        {"top_k", e.top_k}};
}

LimeExplanation lime_from_json(const nlohmann::json& j) {
  LimeExplanation e;
  e.rows = j.at("rows").get<int>();
  e.cols = j.at("cols").get<int>();
  e.cell_importance = j.at("cell_importance").get<std::vector<double>>();
  e.intercept = j.at("intercept").get<double>();
  e.n_samples = j.at("n_samples").get<int>();
  e.kernel_width = j.at("kernel_width").get<double>();
  e.top_k = j.at("top_k").get<std::vector<int>>();
  return e;
}

}  // namespace hazardpipe
