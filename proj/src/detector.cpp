#include "fedsto/detector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fedsto/rng.hpp"

namespace fedsto {

namespace {
constexpr double kLeakySlope = 0.1;
}

void ArchConfig::validate() const {
  if (image_size <= 0 || grid <= 0 || classes <= 0 || width1 <= 0 || width2 <= 0) {
    throw std::invalid_argument("arch: all dimensions must be positive");
  }
  if (image_size != 8 * grid) {
    throw std::invalid_argument("arch: image_size must equal 8*grid (three stride-2 stages), got " +
                                std::to_string(image_size) + " for grid " + std::to_string(grid));
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) {
  p = std::min(std::max(p, 1e-6), 1.0 - 1e-6);
  return std::log(p / (1.0 - p));
}

ParamSet init_model(const ArchConfig& arch, uint64_t seed) {
  arch.validate();
  ParamSet ps;
  auto add_conv = [&](const std::string& name, Part part, int cout, int cin, int k, uint64_t lane) {
    Rng rng = Rng::derive(seed, 0xC0DE, lane);
    double bound = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
    ad::Array w = ad::Array::zeros({cout, cin, k, k});
    for (auto& v : w.data) v = static_cast<float>(rng.uniform(-bound, bound));
    ps.add(name + ".w", part, std::move(w));
    ps.add(name + ".b", part, ad::Array::zeros({cout}));
  };
  add_conv("backbone.conv1", Part::kBackbone, arch.width1, 3, 3, 1);
  add_conv("backbone.conv2", Part::kBackbone, arch.width2, arch.width1, 3, 2);
  add_conv("neck.conv", Part::kNeck, arch.width2, arch.width2, 3, 3);
  add_conv("head.conv", Part::kHead, arch.head_channels(), arch.width2, 1, 4);
  return ps;
}

DetectorNodes build_detector(ad::Graph& g, const ArchConfig& arch) {
  arch.validate();
  DetectorNodes nodes;
  nodes.image = g.input("image", {arch.image_size, arch.image_size, 3});

  auto conv_block = [&](ad::NodeId x, const std::string& name, int cout, int cin, int k, int stride,
                        int pad, bool activate) {
    ad::NodeId w = g.input(name + ".w", {cout, cin, k, k});
    ad::NodeId b = g.input(name + ".b", {cout});
    nodes.param_names.push_back(name + ".w");
    nodes.param_names.push_back(name + ".b");
    ad::NodeId y = g.add(g.conv2d(x, w, stride, pad), b);
    return activate ? g.leaky_relu(y, kLeakySlope) : y;
  };

  ad::NodeId x = conv_block(nodes.image, "backbone.conv1", arch.width1, 3, 3, 2, 1, true);
  x = conv_block(x, "backbone.conv2", arch.width2, arch.width1, 3, 2, 1, true);
  nodes.backbone_out = x;
  x = conv_block(x, "neck.conv", arch.width2, arch.width2, 3, 2, 1, true);
  nodes.neck_out = x;
  nodes.predictions = conv_block(x, "head.conv", arch.head_channels(), arch.width2, 1, 1, 0, false);
  return nodes;
}

std::map<std::string, ad::Array> detector_bindings(const ParamSet& params, const ad::Array& image) {
  std::map<std::string, ad::Array> bindings;
  bindings["image"] = image;
  for (const auto& e : params.entries()) bindings[e.name] = e.value;
  return bindings;
}

GridPredictions predict(const ParamSet& params, const ad::Array& image, const ArchConfig& arch) {
  ad::Graph g;
  DetectorNodes nodes = build_detector(g, arch);
  ad::Evaluation eval = g.forward(detector_bindings(params, image));
  GridPredictions preds;
  preds.grid = arch.grid;
  preds.classes = arch.classes;
  preds.raw = eval.value(nodes.predictions);
  if (!preds.raw.all_finite()) throw std::runtime_error("predict: non-finite detector output");
  return preds;
}

namespace {

// Decoded per-cell candidate before thresholding.
Detection decode_cell(const GridPredictions& preds, int row, int col) {
  int s = preds.grid;
  double tx = preds.at(row, col, 0);
  double ty = preds.at(row, col, 1);
  double tw = preds.at(row, col, 2);
  double th = preds.at(row, col, 3);
  double obj = sigmoid(preds.at(row, col, 4));

  // softmax over class logits
  int k = preds.classes;
  double mx = preds.at(row, col, 5);
  for (int c = 1; c < k; ++c) mx = std::max(mx, static_cast<double>(preds.at(row, col, 5 + c)));
  double denom = 0.0;
  std::vector<double> p(static_cast<size_t>(k));
  for (int c = 0; c < k; ++c) {
    p[static_cast<size_t>(c)] = std::exp(static_cast<double>(preds.at(row, col, 5 + c)) - mx);
    denom += p[static_cast<size_t>(c)];
  }
  int best = 0;
  for (int c = 1; c < k; ++c) {
    if (p[static_cast<size_t>(c)] > p[static_cast<size_t>(best)]) best = c;
  }

  double cx = (col + sigmoid(tx)) / s;
  double cy = (row + sigmoid(ty)) / s;
  double w = sigmoid(tw);
  double h = sigmoid(th);
  BoundingBox box{std::max(0.0, cx - 0.5 * w), std::max(0.0, cy - 0.5 * h),
                  std::min(1.0, cx + 0.5 * w), std::min(1.0, cy + 0.5 * h)};

  Detection det;
  det.box = box;
  det.class_id = best;
  det.objectness = obj;
  det.score = obj * (p[static_cast<size_t>(best)] / denom);
  return det;
}

}  // namespace

std::vector<Detection> decode(const GridPredictions& preds, double conf_threshold, double nms_iou) {
  if (conf_threshold < 0.0 || conf_threshold > 1.0 || nms_iou < 0.0 || nms_iou > 1.0) {
    throw std::invalid_argument("decode: thresholds must lie in [0,1]");
  }
  std::vector<Detection> candidates;
  for (int i = 0; i < preds.grid; ++i) {
    for (int j = 0; j < preds.grid; ++j) {
      Detection det = decode_cell(preds, i, j);
      if (det.score >= conf_threshold) candidates.push_back(det);
    }
  }
  return nms(std::move(candidates), nms_iou);
}

std::vector<CellTarget> assign_to_cells(const std::vector<Annotation>& annotations, int grid) {
  std::vector<CellTarget> targets;
  std::vector<bool> taken(static_cast<size_t>(grid) * grid, false);
  for (const auto& ann : annotations) {
    ann.box.validate("annotation");
    int col = std::min(grid - 1, static_cast<int>(ann.box.center_x() * grid));
    int row = std::min(grid - 1, static_cast<int>(ann.box.center_y() * grid));
    size_t cell = static_cast<size_t>(row) * grid + col;
    if (taken[cell]) {
      throw std::invalid_argument("assign_to_cells: two annotations share cell (" +
                                  std::to_string(row) + "," + std::to_string(col) + ")");
    }
    taken[cell] = true;
    targets.push_back(CellTarget{row, col, ann});
  }
  return targets;
}

GridPredictions encode_targets(const std::vector<Annotation>& annotations, const ArchConfig& arch,
                               double saturation) {
  GridPredictions preds;
  preds.grid = arch.grid;
  preds.classes = arch.classes;
  preds.raw = ad::Array::full({arch.grid, arch.grid, arch.head_channels()}, 0.0f);
  for (int i = 0; i < arch.grid; ++i)
    for (int j = 0; j < arch.grid; ++j) preds.at(i, j, 4) = static_cast<float>(-saturation);

  for (const auto& t : assign_to_cells(annotations, arch.grid)) {
    const BoundingBox& b = t.ann.box;
    preds.at(t.row, t.col, 0) = static_cast<float>(logit(b.center_x() * arch.grid - t.col));
    preds.at(t.row, t.col, 1) = static_cast<float>(logit(b.center_y() * arch.grid - t.row));
    preds.at(t.row, t.col, 2) = static_cast<float>(logit(b.width()));
    preds.at(t.row, t.col, 3) = static_cast<float>(logit(b.height()));
    preds.at(t.row, t.col, 4) = static_cast<float>(saturation);
    for (int c = 0; c < arch.classes; ++c) {
      preds.at(t.row, t.col, 5 + c) =
          static_cast<float>(c == t.ann.class_id ? saturation : -saturation);
    }
  }
  return preds;
}

}  // namespace fedsto
