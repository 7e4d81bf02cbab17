#pragma once

// Brute-force reference for detection metrics, written independently of the
// library: integer boxes only, IoU by counting unit cells, matching by
// repeated linear scans, AP from an O(n^2) precision envelope.

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "hazardpipe/detect/metrics.hpp"

namespace oracle {

struct IBox {
  int x0, y0, x1, y1;
};

struct Pred {
  IBox box;
  int cls;
  double score;
};

struct Truth {
  IBox box;
  int cls;
};

struct Image {
  std::string id;
  std::vector<Pred> preds;
  std::vector<Truth> truths;
};

inline long cells_inside(const IBox& a, const IBox& b) {
  long n = 0;
  for (int y = std::min(a.y0, b.y0); y < std::max(a.y1, b.y1); ++y) {
    for (int x = std::min(a.x0, b.x0); x < std::max(a.x1, b.x1); ++x) {
      const bool in_a = x >= a.x0 && x < a.x1 && y >= a.y0 && y < a.y1;
      const bool in_b = x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1;
      if (in_a && in_b) ++n;
    }
  }
  return n;
}

inline double iou(const IBox& a, const IBox& b) {
  const long inter = cells_inside(a, b);
  if (inter == 0) return 0.0;
  const long area_a = static_cast<long>(a.x1 - a.x0) * (a.y1 - a.y0);
  const long area_b = static_cast<long>(b.x1 - b.x0) * (b.y1 - b.y0);
  return static_cast<double>(inter) / static_cast<double>(area_a + area_b - inter);
}

// Ranking key: higher score first, then smaller (x0, y0, x1, y1), then input order.
inline bool ranks_before(const Pred& a, std::size_t ia, const Pred& b, std::size_t ib) {
  if (a.score != b.score) return a.score > b.score;
  const auto ka = std::make_tuple(a.box.x0, a.box.y0, a.box.x1, a.box.y1);
  const auto kb = std::make_tuple(b.box.x0, b.box.y0, b.box.x1, b.box.y1);
  if (ka != kb) return ka < kb;
  return ia < ib;
}

struct Hit {
  double score;
  std::string image;
  IBox box;
  std::size_t index;
  bool hit;
};

// Hits for every prediction of one image at one threshold.
inline std::vector<Hit> match_image(const Image& img, double thr) {
  std::vector<bool> visited(img.preds.size(), false), taken(img.truths.size(), false);
  std::vector<Hit> out(img.preds.size());
  for (std::size_t round = 0; round < img.preds.size(); ++round) {
    std::size_t best = img.preds.size();
    for (std::size_t i = 0; i < img.preds.size(); ++i) {
      if (visited[i]) continue;
      if (best == img.preds.size() || ranks_before(img.preds[i], i, img.preds[best], best)) best = i;
    }
    visited[best] = true;
    const auto& p = img.preds[best];
    double best_iou = -1.0;
    std::size_t chosen = img.truths.size();
    for (std::size_t t = 0; t < img.truths.size(); ++t) {
      if (taken[t] || img.truths[t].cls != p.cls) continue;
      const double v = iou(p.box, img.truths[t].box);
      if (v >= thr && v > best_iou) {
        best_iou = v;
        chosen = t;
      }
    }
    if (chosen < img.truths.size()) taken[chosen] = true;
    out[best] = {p.score, img.id, p.box, best, chosen < img.truths.size()};
  }
  return out;
}

inline double ap(std::vector<Hit> hits, std::size_t n_truth) {
  if (n_truth == 0) return hits.empty() ? 1.0 : 0.0;
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.image != b.image) return a.image < b.image;
    const auto ka = std::make_tuple(a.box.x0, a.box.y0, a.box.x1, a.box.y1);
    const auto kb = std::make_tuple(b.box.x0, b.box.y0, b.box.x1, b.box.y1);
    if (ka != kb) return ka < kb;
    return a.index < b.index;
  });
  const std::size_t n = hits.size();
  double total = 0.0;
  std::size_t tp_before = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!hits[k].hit) continue;
    // Every true positive raises recall by 1/n_truth; weight it by the best
    // precision achievable at this rank or later.
    double envelope = 0.0;
    std::size_t tp = tp_before;
    for (std::size_t j = k; j < n; ++j) {
      if (hits[j].hit) ++tp;
      envelope = std::max(envelope, static_cast<double>(tp) / static_cast<double>(j + 1));
    }
    total += envelope / static_cast<double>(n_truth);
    ++tp_before;
  }
  return total;
}

struct Result {
  double precision, recall, map50, map5095;
  std::map<int, double> ap50;
};

inline Result evaluate(const std::vector<Image>& images) {
  std::set<int> classes;
  std::map<int, std::size_t> n_truth, n_pred;
  for (const auto& img : images) {
    for (const auto& p : img.preds) classes.insert(p.cls), ++n_pred[p.cls];
    for (const auto& t : img.truths) classes.insert(t.cls), ++n_truth[t.cls];
  }
  Result r{};
  std::size_t tp = 0, preds = 0, truths = 0;
  for (const auto& [c, n] : n_pred) preds += n;
  for (const auto& [c, n] : n_truth) truths += n;
  double sum50 = 0.0, sum5095 = 0.0;
  for (int c : classes) {
    double per_thr = 0.0;
    for (int k = 0; k < 10; ++k) {
      const double thr = 0.5 + 0.05 * k;
      std::vector<Hit> hits;
      for (const auto& img : images) {
        for (const auto& h : match_image(img, thr)) {
          if (img.preds[h.index].cls != c) continue;
          hits.push_back(h);
          if (k == 0 && h.hit) ++tp;
        }
      }
      const double a = ap(hits, n_truth[c]);
      if (k == 0) r.ap50[c] = a, sum50 += a;
      per_thr += a;
    }
    sum5095 += per_thr / 10.0;
  }
  r.map50 = classes.empty() ? 1.0 : sum50 / classes.size();
  r.map5095 = classes.empty() ? 1.0 : sum5095 / classes.size();
  r.precision = preds == 0 ? (truths == tp ? 1.0 : 0.0) : static_cast<double>(tp) / preds;
  r.recall = truths == 0 ? (preds == tp ? 1.0 : 0.0) : static_cast<double>(tp) / truths;
  return r;
}

inline hazardpipe::BoundingBox to_box(const IBox& b) { return hazardpipe::BoundingBox::make(b.x0, b.y0, b.x1, b.y1); }

inline void to_library(const std::vector<Image>& images, hazardpipe::PredictionSet& preds,
                       hazardpipe::GroundTruth& truth) {
  for (const auto& img : images) {
    auto& p = preds[img.id];
    auto& t = truth[img.id];
    for (const auto& x : img.preds) {
      p.push_back({to_box(x.box), hazardpipe::kAllHazardClasses[x.cls], x.score});
    }
    for (const auto& x : img.truths) t.push_back({to_box(x.box), hazardpipe::kAllHazardClasses[x.cls]});
  }
}

// Random fixture with up to 5 images and up to 6 predictions and 6 truths
// each. Predictions are mostly perturbed truths so that every IoU band gets
// exercised; scores come from a small set to force ties.
inline std::vector<Image> random_fixture(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n_img(1, 5), n_box(0, 6), cls(0, 2), pos(0, 40), size(4, 16), jit(-3, 3);
  static const double kScores[] = {0.2, 0.5, 0.5, 0.7, 0.9, 0.9, 0.95};
  std::uniform_int_distribution<int> score(0, 6), coin(0, 3);
  std::vector<Image> out;
  const int n = n_img(rng);
  for (int i = 0; i < n; ++i) {
    Image img;
    img.id = "img" + std::to_string(i);
    const int nt = n_box(rng);
    for (int k = 0; k < nt; ++k) {
      const int x = pos(rng), y = pos(rng);
      img.truths.push_back({{x, y, x + size(rng), y + size(rng)}, cls(rng)});
    }
    const int np = n_box(rng);
    for (int k = 0; k < np; ++k) {
      IBox b;
      if (!img.truths.empty() && coin(rng) != 0) {
        const auto& t = img.truths[static_cast<std::size_t>(k) % img.truths.size()].box;
        b = {std::max(0, t.x0 + jit(rng)), std::max(0, t.y0 + jit(rng)), t.x1 + jit(rng), t.y1 + jit(rng)};
        if (b.x1 <= b.x0) b.x1 = b.x0 + 1;
        if (b.y1 <= b.y0) b.y1 = b.y0 + 1;
      } else {
        const int x = pos(rng), y = pos(rng);
        b = {x, y, x + size(rng), y + size(rng)};
      }
      img.preds.push_back({b, cls(rng), kScores[score(rng)]});
    }
    out.push_back(img);
  }
  return out;
}

}  // namespace oracle
