#pragma once

#include <vector>

#include "fedsto/boxes.hpp"

namespace fedsto {

// Greedy matching of one image's detections against ground truths for a
// single class. det_tp is reported in descending-score order (det_order maps
// back to the caller's indices); each ground truth matches at most once, to
// the highest-IoU unmatched candidate at or above the threshold.
struct MatchResult {
  std::vector<int> det_order;
  std::vector<bool> det_tp;
  std::vector<bool> gt_matched;
};

MatchResult match_detections(const std::vector<Detection>& detections,
                             const std::vector<BoundingBox>& ground_truths, double iou_threshold);

// All-point interpolated average precision for a single class pool.
// Defined as 1 when both sets are empty and 0 when ground truths exist but
// nothing matches (or when detections exist without any ground truth).
double average_precision(const std::vector<Detection>& detections,
                         const std::vector<BoundingBox>& ground_truths, double iou_threshold);

struct EvalSample {
  std::vector<Detection> detections;
  std::vector<Annotation> ground_truths;
};

// Mean AP over classes that have at least one ground truth anywhere in the
// samples; detections are pooled across images, matched within their image.
double map_at(const std::vector<EvalSample>& samples, int num_classes, double iou_threshold);

}  // namespace fedsto
