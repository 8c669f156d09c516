#pragma once

#include <vector>

namespace fedsto {

// Axis-aligned box in image-fraction coordinates, corner form.
struct BoundingBox {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }

  bool is_valid() const;
  void validate(const char* context) const;

  static BoundingBox from_center(double cx, double cy, double w, double h);
};

struct Detection {
  BoundingBox box;
  int class_id = 0;
  double score = 0;       // objectness * class probability
  double objectness = 0;  // sigmoid of the objectness logit
};

struct Annotation {
  int class_id = 0;
  BoundingBox box;
};

// Intersection area / union area, in [0,1].
double iou(const BoundingBox& a, const BoundingBox& b);

// Greedy class-wise non-maximum suppression. Keeps detections in descending
// score order; a kept detection suppresses later same-class detections whose
// IoU with it exceeds iou_threshold. Idempotent.
std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold);

}  // namespace fedsto
