#include "fedsto/boxes.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace fedsto {

bool BoundingBox::is_valid() const {
  return x_min < x_max && y_min < y_max && x_min >= 0.0 && y_min >= 0.0 && x_max <= 1.0 &&
         y_max <= 1.0;
}

void BoundingBox::validate(const char* context) const {
  if (!is_valid()) {
    throw std::invalid_argument(std::string(context) + ": invalid box [" + std::to_string(x_min) +
                                "," + std::to_string(y_min) + "," + std::to_string(x_max) + "," +
                                std::to_string(y_max) + "]");
  }
}

BoundingBox BoundingBox::from_center(double cx, double cy, double w, double h) {
  return BoundingBox{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  double inter = ix * iy;
  double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold) {
  std::stable_sort(detections.begin(), detections.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<Detection> kept;
  for (const auto& d : detections) {
    bool suppressed = false;
    for (const auto& k : kept) {
      if (k.class_id == d.class_id && iou(k.box, d.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

}  // namespace fedsto
