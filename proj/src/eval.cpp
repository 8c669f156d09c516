#include "fedsto/eval.hpp"

#include <algorithm>
#include <numeric>

namespace fedsto {

MatchResult match_detections(const std::vector<Detection>& detections,
                             const std::vector<BoundingBox>& ground_truths, double iou_threshold) {
  MatchResult res;
  res.det_order.resize(detections.size());
  std::iota(res.det_order.begin(), res.det_order.end(), 0);
  std::stable_sort(res.det_order.begin(), res.det_order.end(), [&](int a, int b) {
    return detections[static_cast<size_t>(a)].score > detections[static_cast<size_t>(b)].score;
  });
  res.det_tp.assign(detections.size(), false);
  res.gt_matched.assign(ground_truths.size(), false);

  for (size_t rank = 0; rank < res.det_order.size(); ++rank) {
    const Detection& det = detections[static_cast<size_t>(res.det_order[rank])];
    int best_gt = -1;
    double best_iou = 0.0;
    for (size_t g = 0; g < ground_truths.size(); ++g) {
      if (res.gt_matched[g]) continue;
      double v = iou(det.box, ground_truths[g]);
      if (v >= iou_threshold && v > best_iou) {
        best_iou = v;
        best_gt = static_cast<int>(g);
      }
    }
    if (best_gt >= 0) {
      res.gt_matched[static_cast<size_t>(best_gt)] = true;
      res.det_tp[rank] = true;
    }
  }
  return res;
}

namespace {

// All-point interpolated AP from a pooled (score, tp) list and GT count.
double ap_from_pool(std::vector<std::pair<double, bool>> pool, int n_gt) {
  if (n_gt == 0) return pool.empty() ? 1.0 : 0.0;
  if (pool.empty()) return 0.0;
  std::stable_sort(pool.begin(), pool.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });

  size_t n = pool.size();
  std::vector<double> precision(n), recall(n);
  int tp = 0;
  for (size_t i = 0; i < n; ++i) {
    if (pool[i].second) ++tp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / static_cast<double>(n_gt);
  }
  // precision envelope from the right
  std::vector<double> env(n);
  double best = 0.0;
  for (size_t i = n; i-- > 0;) {
    best = std::max(best, precision[i]);
    env[i] = best;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (pool[i].second) {
      ap += (recall[i] - prev_recall) * env[i];
      prev_recall = recall[i];
    }
  }
  return ap;
}

}  // namespace

double average_precision(const std::vector<Detection>& detections,
                         const std::vector<BoundingBox>& ground_truths, double iou_threshold) {
  MatchResult match = match_detections(detections, ground_truths, iou_threshold);
  std::vector<std::pair<double, bool>> pool;
  pool.reserve(detections.size());
  for (size_t rank = 0; rank < match.det_order.size(); ++rank) {
    pool.emplace_back(detections[static_cast<size_t>(match.det_order[rank])].score,
                      match.det_tp[rank]);
  }
  return ap_from_pool(std::move(pool), static_cast<int>(ground_truths.size()));
}

double map_at(const std::vector<EvalSample>& samples, int num_classes, double iou_threshold) {
  double sum = 0.0;
  int counted = 0;
  for (int cls = 0; cls < num_classes; ++cls) {
    std::vector<std::pair<double, bool>> pool;
    int n_gt = 0;
    for (const auto& sample : samples) {
      std::vector<Detection> dets;
      std::vector<BoundingBox> gts;
      for (const auto& d : sample.detections) {
        if (d.class_id == cls) dets.push_back(d);
      }
      for (const auto& g : sample.ground_truths) {
        if (g.class_id == cls) gts.push_back(g.box);
      }
      n_gt += static_cast<int>(gts.size());
      MatchResult match = match_detections(dets, gts, iou_threshold);
      for (size_t rank = 0; rank < match.det_order.size(); ++rank) {
        pool.emplace_back(dets[static_cast<size_t>(match.det_order[rank])].score, match.det_tp[rank]);
      }
    }
    if (n_gt == 0) continue;  // classes absent from the ground truth are excluded from the mean
    sum += ap_from_pool(std::move(pool), n_gt);
    ++counted;
  }
  if (counted == 0) return 1.0;
  return sum / counted;
}

}  // namespace fedsto
