#include "hazardpipe/detect/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <tuple>

#include "hazardpipe/core/error.hpp"
#include "hazardpipe/core/json.hpp"

namespace hazardpipe {

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::max(0.0, std::min(a.x_max(), b.x_max()) - std::max(a.x_min(), b.x_min()));
  const double iy = std::max(0.0, std::min(a.y_max(), b.y_max()) - std::max(a.y_min(), b.y_min()));
  const double inter = ix * iy;
  if (inter <= 0.0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

namespace {

std::vector<std::size_t> ranked_order(std::span<const ScoredBox> preds) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (preds[a].score != preds[b].score) return preds[a].score > preds[b].score;
    return box_less(preds[a].box, preds[b].box);
  });
  return order;
}

// Area under the monotone precision envelope given hits in rank order.
double ap_from_ranking(const std::vector<bool>& hits, std::size_t n_truth) {
  if (n_truth == 0) return hits.empty() ? 1.0 : 0.0;
  const std::size_t n = hits.size();
  std::vector<double> precision(n), recall(n);
  std::size_t tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (hits[k]) ++tp;
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(tp) / static_cast<double>(n_truth);
  }
  for (std::size_t k = n; k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (recall[k] > prev_recall) {
      ap += (recall[k] - prev_recall) * precision[k];
      prev_recall = recall[k];
    }
  }
  return ap;
}

double safe_ratio(std::size_t num, std::size_t den, std::size_t other_errors) {
  if (den == 0) return other_errors == 0 ? 1.0 : 0.0;
  return static_cast<double>(num) / static_cast<double>(den);
}

struct RankedHit {
  double score;
  const std::string* image;
  BoundingBox box;
  std::size_t index;
  bool hit;
};

}  // namespace

std::vector<MatchResult> match_detections(std::span<const ScoredBox> preds,
                                          std::span<const LabeledBox> truths, double thr) {
  std::vector<MatchResult> out;
  out.reserve(preds.size());
  std::vector<bool> taken(truths.size(), false);
  for (std::size_t p : ranked_order(preds)) {
    MatchResult m{p, std::nullopt, 0.0};
    for (std::size_t t = 0; t < truths.size(); ++t) {
      if (taken[t] || truths[t].hazard_class != preds[p].hazard_class) continue;
      const double v = iou(preds[p].box, truths[t].box);
      if (v >= thr && (!m.truth || v > m.iou)) {
        m.truth = t;
        m.iou = v;
      }
    }
    if (m.truth) taken[*m.truth] = true;
    out.push_back(m);
  }
  return out;
}

double average_precision(std::span<const ScoredBox> preds, std::span<const LabeledBox> truths,
                         double thr) {
  std::vector<bool> hits;
  for (const auto& m : match_detections(preds, truths, thr)) hits.push_back(m.truth.has_value());
  return ap_from_ranking(hits, truths.size());
}

std::vector<double> coco_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

MetricsReport evaluate(const PredictionSet& preds, const GroundTruth& truth) {
  std::set<std::string> images;
  for (const auto& [id, v] : truth) images.insert(id);
  for (const auto& [id, v] : preds) images.insert(id);
  if (images.empty()) throw Error("EmptyDataset", "no images to evaluate");

  static const std::vector<ScoredBox> kNoPreds;
  static const std::vector<LabeledBox> kNoTruths;
  const auto thresholds = coco_thresholds();

  MetricsReport report;
  report.n_images = images.size();
  std::set<HazardClass> classes;
  std::map<HazardClass, std::size_t> n_truth, n_pred;
  for (const auto& img : images) {
    auto p = preds.find(img);
    auto t = truth.find(img);
    if (p != preds.end()) {
      for (const auto& b : p->second) {
        classes.insert(b.hazard_class);
        ++n_pred[b.hazard_class];
      }
    }
    if (t != truth.end()) {
      for (const auto& b : t->second) {
        classes.insert(b.hazard_class);
        ++n_truth[b.hazard_class];
      }
    }
  }

  // ranked[threshold][class] -> pooled ranking
  std::vector<std::map<HazardClass, std::vector<RankedHit>>> ranked(thresholds.size());
  std::map<HazardClass, std::size_t> tp50;
  for (const auto& img : images) {
    auto p = preds.find(img);
    auto t = truth.find(img);
    const auto& ps = p == preds.end() ? kNoPreds : p->second;
    const auto& ts = t == truth.end() ? kNoTruths : t->second;
    for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
      for (const auto& m : match_detections(ps, ts, thresholds[ti])) {
        const auto& pb = ps[m.pred];
        ranked[ti][pb.hazard_class].push_back(
            RankedHit{pb.score, &p->first, pb.box, m.pred, m.truth.has_value()});
        if (ti == 0 && m.truth) ++tp50[pb.hazard_class];
      }
    }
  }

  double sum50 = 0.0, sum5095 = 0.0;
  for (HazardClass c : classes) {
    ClassMetrics cm;
    cm.n_truth = n_truth[c];
    cm.n_pred = n_pred[c];
    cm.true_positives = tp50[c];
    double ap_sum = 0.0;
    for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
      auto& list = ranked[ti][c];
      std::sort(list.begin(), list.end(), [](const RankedHit& a, const RankedHit& b) {
        if (a.score != b.score) return a.score > b.score;
        if (*a.image != *b.image) return *a.image < *b.image;
        if (a.box != b.box) return box_less(a.box, b.box);
        return a.index < b.index;
      });
      std::vector<bool> hits;
      hits.reserve(list.size());
      for (const auto& h : list) hits.push_back(h.hit);
      const double ap = ap_from_ranking(hits, cm.n_truth);
      if (ti == 0) cm.ap_50 = ap;
      ap_sum += ap;
    }
    cm.ap_50_95 = ap_sum / static_cast<double>(thresholds.size());
    cm.precision = safe_ratio(cm.true_positives, cm.n_pred, cm.n_truth - cm.true_positives);
    cm.recall = safe_ratio(cm.true_positives, cm.n_truth, cm.n_pred - cm.true_positives);
    sum50 += cm.ap_50;
    sum5095 += cm.ap_50_95;
    report.true_positives += cm.true_positives;
    report.false_positives += cm.n_pred - cm.true_positives;
    report.false_negatives += cm.n_truth - cm.true_positives;
    report.per_class[c] = cm;
  }
  if (classes.empty()) {
    report.map_50 = report.map_50_95 = 1.0;
  } else {
    report.map_50 = sum50 / static_cast<double>(classes.size());
    report.map_50_95 = sum5095 / static_cast<double>(classes.size());
  }
  report.box_precision = safe_ratio(report.true_positives, report.true_positives + report.false_positives,
                                    report.false_negatives);
  report.recall = safe_ratio(report.true_positives, report.true_positives + report.false_negatives,
                             report.false_positives);
  return report;
}

void to_json(nlohmann::json& j, const ClassMetrics& m) {
  j = nlohmann::json{{"ap_50", m.ap_50},     {"ap_50_95", m.ap_50_95}, {"precision", m.precision},
                     {"recall", m.recall},   {"n_truth", m.n_truth},   {"n_pred", m.n_pred},
                     {"true_positives", m.true_positives}};
}

void to_json(nlohmann::json& j, const MetricsReport& m) {
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [c, cm] : m.per_class) per_class[std::string(hazard_label(c))] = cm;
  j = nlohmann::json{{"box_precision", m.box_precision},
                     {"recall", m.recall},
                     {"map_50", m.map_50},
                     {"map_50_95", m.map_50_95},
                     {"per_class", per_class},
                     {"mean_latency_s", m.mean_latency_s},
                     {"n_images", m.n_images},
                     {"n_sites_found", m.n_sites_found},
                     {"true_positives", m.true_positives},
                     {"false_positives", m.false_positives},
                     {"false_negatives", m.false_negatives}};
}

namespace {

std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("IoError", "cannot open " + path);
  std::vector<nlohmann::json> rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error("InvalidInput", path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace

PredictionSet read_predictions_jsonl(const std::string& path) {
  PredictionSet out;
  for (const auto& row : read_jsonl(path)) {
    auto& list = out[row.at("image_id").get<std::string>()];
    for (const auto& d : row.at("detections")) {
      const double score = d.at("score").get<double>();
      if (score < 0.0 || score > 1.0) throw Error("InvalidInput", "score outside [0,1]");
      list.push_back(ScoredBox{d.at("box").get<BoundingBox>(), d.at("class").get<HazardClass>(), score});
    }
  }
  return out;
}

GroundTruth read_ground_truth_jsonl(const std::string& path) {
  GroundTruth out;
  for (const auto& row : read_jsonl(path)) {
    auto& list = out[row.at("image_id").get<std::string>()];
    for (const auto& b : row.at("boxes")) {
      list.push_back(LabeledBox{b.at("box").get<BoundingBox>(), b.at("class").get<HazardClass>()});
    }
  }
  return out;
}

}  // namespace hazardpipe
