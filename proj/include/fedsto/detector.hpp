#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedsto/boxes.hpp"
#include "fedsto/graph.hpp"
#include "fedsto/param_set.hpp"

namespace fedsto {

// Single-stage grid detector: backbone = two 3x3 stride-2 convolutions,
// neck = one 3x3 stride-2 convolution, head = one 1x1 convolution emitting
// 5+K channels, one anchor per cell. Three stride-2 stages fix
// image_size == 8 * grid.
struct ArchConfig {
  int image_size = 32;
  int grid = 4;
  int classes = 3;
  int width1 = 8;
  int width2 = 16;

  void validate() const;
  int head_channels() const { return 5 + classes; }
};

// Raw per-cell detector outputs, shape (S, S, 5+K) with channel layout
// [tx, ty, tw, th, objectness, class logits...].
struct GridPredictions {
  int grid = 0;
  int classes = 0;
  ad::Array raw;

  float at(int row, int col, int channel) const { return raw.at({row, col, channel}); }
  float& at(int row, int col, int channel) { return raw.at({row, col, channel}); }
};

ParamSet init_model(const ArchConfig& arch, uint64_t seed);

// Graph-side detector; the caller owns the graph and may extend it with
// losses. Parameter inputs are named exactly like the ParamSet entries.
struct DetectorNodes {
  ad::NodeId image;
  ad::NodeId backbone_out;
  ad::NodeId neck_out;
  ad::NodeId predictions;
  std::vector<std::string> param_names;
};

DetectorNodes build_detector(ad::Graph& graph, const ArchConfig& arch);

std::map<std::string, ad::Array> detector_bindings(const ParamSet& params, const ad::Array& image);

GridPredictions predict(const ParamSet& params, const ad::Array& image, const ArchConfig& arch);

// Thresholded, class-wise NMS decode; detections sorted by descending score.
std::vector<Detection> decode(const GridPredictions& preds, double conf_threshold, double nms_iou);

// Ground-truth cell assignment: a box belongs to the cell containing its
// center; synthetic data guarantees at most one object per cell.
struct CellTarget {
  int row = 0;
  int col = 0;
  Annotation ann;
};

std::vector<CellTarget> assign_to_cells(const std::vector<Annotation>& annotations, int grid);

// Builds logits that decode back to the given annotations (saturated
// objectness/class logits, exact box logits up to sigmoid round-trip).
GridPredictions encode_targets(const std::vector<Annotation>& annotations, const ArchConfig& arch,
                               double saturation = 12.0);

double sigmoid(double x);
double logit(double p);

}  // namespace fedsto
