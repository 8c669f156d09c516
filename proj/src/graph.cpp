#include "fedsto/graph.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "fedsto/spectral.hpp"

namespace fedsto::ad {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kInput: return "input";
    case OpKind::kConst: return "const";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kReshape: return "reshape";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kAffine: return "affine";
    case OpKind::kLeakyRelu: return "leaky_relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kLog: return "log";
    case OpKind::kExp: return "exp";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kAtan: return "atan";
    case OpKind::kPowConst: return "pow_const";
    case OpKind::kMin: return "min";
    case OpKind::kMax: return "max";
    case OpKind::kClamp: return "clamp";
    case OpKind::kSoftmaxRows: return "softmax_rows";
    case OpKind::kSoftmaxXent: return "softmax_xent";
    case OpKind::kGather: return "gather";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kSpectralNorm: return "spectral_norm";
  }
  return "?";
}

NodeId Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

const Graph::Node& Graph::node(NodeId id) const {
  if (id < 0 || id >= static_cast<NodeId>(nodes_.size())) {
    throw std::invalid_argument("Graph: node id " + std::to_string(id) + " out of range");
  }
  return nodes_[static_cast<size_t>(id)];
}

void Graph::fail(NodeId id, const std::string& message) const {
  std::ostringstream os;
  os << "Graph node #" << id;
  if (id >= 0 && id < static_cast<NodeId>(nodes_.size())) os << " (" << op_name(nodes_[static_cast<size_t>(id)].kind) << ")";
  os << ": " << message;
  throw std::runtime_error(os.str());
}

void Graph::check_same_shape(OpKind kind, NodeId a, NodeId b) const {
  if (node(a).shape != node(b).shape) {
    throw std::invalid_argument(std::string(op_name(kind)) + ": shape mismatch " +
                                shape_str(node(a).shape) + " vs " + shape_str(node(b).shape));
  }
}

const std::vector<int>& Graph::shape_of(NodeId id) const { return node(id).shape; }

NodeId Graph::input(const std::string& name, std::vector<int> shape) {
  if (input_names_.count(name)) throw std::invalid_argument("Graph: duplicate input name '" + name + "'");
  Node n;
  n.kind = OpKind::kInput;
  n.shape = std::move(shape);
  n.name = name;
  NodeId id = push(std::move(n));
  input_names_[name] = id;
  return id;
}

NodeId Graph::constant(Array value) {
  Node n;
  n.kind = OpKind::kConst;
  n.shape = value.shape;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  const auto& sa = node(a).shape;
  const auto& sb = node(b).shape;
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(sa) + " x " + shape_str(sb));
  }
  Node n;
  n.kind = OpKind::kMatMul;
  n.shape = {sa[0], sb[1]};
  n.inputs = {a, b};
  return push(std::move(n));
}

NodeId Graph::transpose(NodeId a) {
  const auto& s = node(a).shape;
  if (s.size() != 2) throw std::invalid_argument("transpose: rank-2 required, got " + shape_str(s));
  Node n;
  n.kind = OpKind::kTranspose;
  n.shape = {s[1], s[0]};
  n.inputs = {a};
  return push(std::move(n));
}

NodeId Graph::reshape(NodeId a, std::vector<int> shape) {
  if (numel(shape) != numel(node(a).shape)) {
    throw std::invalid_argument("reshape: size mismatch " + shape_str(node(a).shape) + " -> " + shape_str(shape));
  }
  Node n;
  n.kind = OpKind::kReshape;
  n.shape = std::move(shape);
  n.inputs = {a};
  return push(std::move(n));
}

NodeId Graph::conv2d(NodeId x, NodeId k, int stride, int pad) {
  const auto& sx = node(x).shape;
  const auto& sk = node(k).shape;
  if (sx.size() != 3 || sk.size() != 4) {
    throw std::invalid_argument("conv2d: expected (H,W,Cin) and (Cout,Cin,KH,KW), got " +
                                shape_str(sx) + " and " + shape_str(sk));
  }
  if (sx[2] != sk[1]) {
    throw std::invalid_argument("conv2d: channel mismatch " + shape_str(sx) + " vs " + shape_str(sk));
  }
  if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: bad stride/pad");
  int ho = (sx[0] + 2 * pad - sk[2]) / stride + 1;
  int wo = (sx[1] + 2 * pad - sk[3]) / stride + 1;
  if (ho <= 0 || wo <= 0) throw std::invalid_argument("conv2d: kernel larger than padded input");
  Node n;
  n.kind = OpKind::kConv2d;
  n.shape = {ho, wo, sk[0]};
  n.inputs = {x, k};
  n.i0 = stride;
  n.i1 = pad;
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  const auto& sa = node(a).shape;
  const auto& sb = node(b).shape;
  bool bias = sb.size() == 1 && !sa.empty() && sa.back() == sb[0] && sa != sb;
  if (!bias) check_same_shape(OpKind::kAdd, a, b);
  Node n;
  n.kind = OpKind::kAdd;
  n.shape = sa;
  n.inputs = {a, b};
  n.i0 = bias ? 1 : 0;
  return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  check_same_shape(OpKind::kSub, a, b);
  Node n;
  n.kind = OpKind::kSub;
  n.shape = node(a).shape;
  n.inputs = {a, b};
  return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  check_same_shape(OpKind::kMul, a, b);
  Node n;
  n.kind = OpKind::kMul;
  n.shape = node(a).shape;
  n.inputs = {a, b};
  return push(std::move(n));
}

NodeId Graph::div(NodeId a, NodeId b) {
  check_same_shape(OpKind::kDiv, a, b);
  Node n;
  n.kind = OpKind::kDiv;
  n.shape = node(a).shape;
  n.inputs = {a, b};
  return push(std::move(n));
}

NodeId Graph::affine(NodeId a, double scale, double shift) {
  Node n;
  n.kind = OpKind::kAffine;
  n.shape = node(a).shape;
  n.inputs = {a};
  n.d0 = scale;
  n.d1 = shift;
  return push(std::move(n));
}

NodeId Graph::leaky_relu(NodeId a, double slope) {
  Node n;
  n.kind = OpKind::kLeakyRelu;
  n.shape = node(a).shape;
  n.inputs = {a};
  n.d0 = slope;
  return push(std::move(n));
}

#define FEDSTO_UNARY(method, KIND)            \
  NodeId Graph::method(NodeId a) {            \
    Node n;                                   \
    n.kind = OpKind::KIND;                    \
    n.shape = node(a).shape;                  \
    n.inputs = {a};                           \
    return push(std::move(n));                \
  }

FEDSTO_UNARY(sigmoid, kSigmoid)
FEDSTO_UNARY(log, kLog)
FEDSTO_UNARY(exp, kExp)
FEDSTO_UNARY(sqrt, kSqrt)
FEDSTO_UNARY(atan, kAtan)
#undef FEDSTO_UNARY

NodeId Graph::pow_const(NodeId a, double exponent) {
  Node n;
  n.kind = OpKind::kPowConst;
  n.shape = node(a).shape;
  n.inputs = {a};
  n.d0 = exponent;
  return push(std::move(n));
}

NodeId Graph::min(NodeId a, NodeId b) {
  check_same_shape(OpKind::kMin, a, b);
  Node n;
  n.kind = OpKind::kMin;
  n.shape = node(a).shape;
  n.inputs = {a, b};
  return push(std::move(n));
}

NodeId Graph::max(NodeId a, NodeId b) {
  check_same_shape(OpKind::kMax, a, b);
  Node n;
  n.kind = OpKind::kMax;
  n.shape = node(a).shape;
  n.inputs = {a, b};
  return push(std::move(n));
}

NodeId Graph::clamp(NodeId a, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo > hi");
  Node n;
  n.kind = OpKind::kClamp;
  n.shape = node(a).shape;
  n.inputs = {a};
  n.d0 = lo;
  n.d1 = hi;
  return push(std::move(n));
}

NodeId Graph::softmax_rows(NodeId a) {
  const auto& s = node(a).shape;
  if (s.size() != 2) throw std::invalid_argument("softmax_rows: rank-2 required, got " + shape_str(s));
  Node n;
  n.kind = OpKind::kSoftmaxRows;
  n.shape = s;
  n.inputs = {a};
  return push(std::move(n));
}

NodeId Graph::softmax_xent(NodeId logits, NodeId targets) {
  const auto& sl = node(logits).shape;
  const auto& st = node(targets).shape;
  if (sl.size() != 2 || sl != st) {
    throw std::invalid_argument("softmax_xent: need matching (N,K) shapes, got " + shape_str(sl) +
                                " and " + shape_str(st));
  }
  Node n;
  n.kind = OpKind::kSoftmaxXent;
  n.shape = {sl[0]};
  n.inputs = {logits, targets};
  return push(std::move(n));
}

NodeId Graph::gather(NodeId a, std::vector<int64_t> indices) {
  int64_t total = numel(node(a).shape);
  for (int64_t i : indices) {
    if (i < 0 || i >= total) throw std::invalid_argument("gather: index " + std::to_string(i) + " out of range");
  }
  Node n;
  n.kind = OpKind::kGather;
  n.shape = {static_cast<int>(indices.size())};
  n.inputs = {a};
  n.indices = std::move(indices);
  return push(std::move(n));
}

NodeId Graph::sum(NodeId a) {
  Node n;
  n.kind = OpKind::kSum;
  n.shape = {};
  n.inputs = {a};
  return push(std::move(n));
}

NodeId Graph::mean(NodeId a) {
  Node n;
  n.kind = OpKind::kMean;
  n.shape = {};
  n.inputs = {a};
  return push(std::move(n));
}

NodeId Graph::spectral_norm(NodeId a, int iterations, uint64_t seed) {
  const auto& s = node(a).shape;
  if (s.size() != 2) throw std::invalid_argument("spectral_norm: rank-2 required, got " + shape_str(s));
  if (iterations < 1) throw std::invalid_argument("spectral_norm: iterations must be >= 1");
  Node n;
  n.kind = OpKind::kSpectralNorm;
  n.shape = {};
  n.inputs = {a};
  n.i0 = iterations;
  n.seed = seed;
  return push(std::move(n));
}

namespace {

inline double sigmoid_d(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Evaluation Graph::forward(const std::map<std::string, Array>& bindings) const {
  Evaluation ev;
  ev.values.resize(nodes_.size());
  ev.spectral.resize(nodes_.size());

  for (const auto& [name, id] : input_names_) {
    auto it = bindings.find(name);
    if (it == bindings.end()) throw std::runtime_error("Graph: input '" + name + "' not bound");
    if (it->second.shape != nodes_[static_cast<size_t>(id)].shape) {
      fail(id, "bound input '" + name + "' has shape " + shape_str(it->second.shape) +
                   ", expected " + shape_str(nodes_[static_cast<size_t>(id)].shape));
    }
  }

  for (NodeId id = 0; id < static_cast<NodeId>(nodes_.size()); ++id) {
    const Node& n = nodes_[static_cast<size_t>(id)];
    Array& out = ev.values[static_cast<size_t>(id)];
    auto in = [&](int i) -> const Array& { return ev.values[static_cast<size_t>(n.inputs[static_cast<size_t>(i)])]; };

    switch (n.kind) {
      case OpKind::kInput:
        out = bindings.at(n.name);
        break;
      case OpKind::kConst:
        out = n.value;
        break;
      case OpKind::kMatMul: {
        const Array& a = in(0);
        const Array& b = in(1);
        int r = a.shape[0], m = a.shape[1], c = b.shape[1];
        out = Array::zeros({r, c});
        for (int i = 0; i < r; ++i) {
          for (int j = 0; j < c; ++j) {
            double acc = 0.0;
            for (int k = 0; k < m; ++k) {
              acc += static_cast<double>(a.data[static_cast<size_t>(i) * m + k]) *
                     static_cast<double>(b.data[static_cast<size_t>(k) * c + j]);
            }
            out.data[static_cast<size_t>(i) * c + j] = static_cast<float>(acc);
          }
        }
        break;
      }
      case OpKind::kTranspose: {
        const Array& a = in(0);
        int r = a.shape[0], c = a.shape[1];
        out = Array::zeros({c, r});
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j)
            out.data[static_cast<size_t>(j) * r + i] = a.data[static_cast<size_t>(i) * c + j];
        break;
      }
      case OpKind::kReshape:
        out = in(0);
        out.shape = n.shape;
        break;
      case OpKind::kConv2d: {
        const Array& x = in(0);
        const Array& k = in(1);
        int h = x.shape[0], w = x.shape[1], ci = x.shape[2];
        int co = k.shape[0], kh = k.shape[2], kw = k.shape[3];
        int stride = n.i0, pad = n.i1;
        int ho = n.shape[0], wo = n.shape[1];
        out = Array::zeros({ho, wo, co});
        for (int oy = 0; oy < ho; ++oy) {
          for (int ox = 0; ox < wo; ++ox) {
            for (int o = 0; o < co; ++o) {
              double acc = 0.0;
              for (int i = 0; i < ci; ++i) {
                for (int ky = 0; ky < kh; ++ky) {
                  int iy = oy * stride - pad + ky;
                  if (iy < 0 || iy >= h) continue;
                  for (int kx = 0; kx < kw; ++kx) {
                    int ix = ox * stride - pad + kx;
                    if (ix < 0 || ix >= w) continue;
                    acc += static_cast<double>(x.data[(static_cast<size_t>(iy) * w + ix) * ci + i]) *
                           static_cast<double>(k.data[((static_cast<size_t>(o) * ci + i) * kh + ky) * kw + kx]);
                  }
                }
              }
              out.data[(static_cast<size_t>(oy) * wo + ox) * co + o] = static_cast<float>(acc);
            }
          }
        }
        break;
      }
      case OpKind::kAdd: {
        const Array& a = in(0);
        const Array& b = in(1);
        out = a;
        if (n.i0) {  // bias add over last dimension
          int c = b.shape[0];
          int64_t rows = a.size() / c;
          for (int64_t r = 0; r < rows; ++r)
            for (int j = 0; j < c; ++j)
              out.data[static_cast<size_t>(r * c + j)] += b.data[static_cast<size_t>(j)];
        } else {
          for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
        }
        break;
      }
      case OpKind::kSub: {
        out = in(0);
        const Array& b = in(1);
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
        break;
      }
      case OpKind::kMul: {
        out = in(0);
        const Array& b = in(1);
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
        break;
      }
      case OpKind::kDiv: {
        out = in(0);
        const Array& b = in(1);
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] /= b.data[i];
        break;
      }
      case OpKind::kAffine: {
        out = in(0);
        for (auto& v : out.data) v = static_cast<float>(n.d0 * v + n.d1);
        break;
      }
      case OpKind::kLeakyRelu: {
        out = in(0);
        for (auto& v : out.data) v = v >= 0.0f ? v : static_cast<float>(n.d0 * v);
        break;
      }
      case OpKind::kSigmoid: {
        out = in(0);
        for (auto& v : out.data) v = static_cast<float>(sigmoid_d(v));
        break;
      }
      case OpKind::kLog: {
        out = in(0);
        for (auto& v : out.data) v = std::log(v);
        break;
      }
      case OpKind::kExp: {
        out = in(0);
        for (auto& v : out.data) v = std::exp(v);
        break;
      }
      case OpKind::kSqrt: {
        out = in(0);
        for (auto& v : out.data) v = std::sqrt(v);
        break;
      }
      case OpKind::kAtan: {
        out = in(0);
        for (auto& v : out.data) v = std::atan(v);
        break;
      }
      case OpKind::kPowConst: {
        out = in(0);
        for (auto& v : out.data) v = static_cast<float>(std::pow(v, n.d0));
        break;
      }
      case OpKind::kMin: {
        out = in(0);
        const Array& b = in(1);
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::min(out.data[i], b.data[i]);
        break;
      }
      case OpKind::kMax: {
        out = in(0);
        const Array& b = in(1);
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::max(out.data[i], b.data[i]);
        break;
      }
      case OpKind::kClamp: {
        out = in(0);
        for (auto& v : out.data) {
          v = std::min(std::max(v, static_cast<float>(n.d0)), static_cast<float>(n.d1));
        }
        break;
      }
      case OpKind::kSoftmaxRows: {
        const Array& a = in(0);
        int rows = a.shape[0], k = a.shape[1];
        out = Array::zeros(a.shape);
        for (int r = 0; r < rows; ++r) {
          const float* row = a.data.data() + static_cast<size_t>(r) * k;
          float* dst = out.data.data() + static_cast<size_t>(r) * k;
          double mx = row[0];
          for (int j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
          double denom = 0.0;
          for (int j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
          for (int j = 0; j < k; ++j) dst[j] = static_cast<float>(std::exp(static_cast<double>(row[j]) - mx) / denom);
        }
        break;
      }
      case OpKind::kSoftmaxXent: {
        const Array& logits = in(0);
        const Array& targets = in(1);
        int rows = logits.shape[0], k = logits.shape[1];
        out = Array::zeros({rows});
        for (int r = 0; r < rows; ++r) {
          const float* x = logits.data.data() + static_cast<size_t>(r) * k;
          const float* t = targets.data.data() + static_cast<size_t>(r) * k;
          double tsum = 0.0;
          for (int j = 0; j < k; ++j) tsum += t[j];
          if (std::abs(tsum - 1.0) > 1e-3) fail(id, "target row does not sum to 1");
          double mx = x[0];
          for (int j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(x[j]));
          double denom = 0.0;
          for (int j = 0; j < k; ++j) denom += std::exp(static_cast<double>(x[j]) - mx);
          double lse = mx + std::log(denom);
          double dot = 0.0;
          for (int j = 0; j < k; ++j) dot += static_cast<double>(t[j]) * static_cast<double>(x[j]);
          out.data[static_cast<size_t>(r)] = static_cast<float>(lse - dot);
        }
        break;
      }
      case OpKind::kGather: {
        const Array& a = in(0);
        out = Array::zeros(n.shape);
        for (size_t i = 0; i < n.indices.size(); ++i) out.data[i] = a.data[static_cast<size_t>(n.indices[i])];
        break;
      }
      case OpKind::kSum: {
        double acc = 0.0;
        for (float v : in(0).data) acc += v;
        out = Array::scalar(static_cast<float>(acc));
        break;
      }
      case OpKind::kMean: {
        double acc = 0.0;
        for (float v : in(0).data) acc += v;
        out = Array::scalar(static_cast<float>(acc / static_cast<double>(in(0).data.size())));
        break;
      }
      case OpKind::kSpectralNorm: {
        const Array& a = in(0);
        SpectralResult res = power_iteration(a.data.data(), a.shape[0], a.shape[1], n.i0, n.seed);
        out = Array::scalar(static_cast<float>(res.sigma));
        ev.spectral[static_cast<size_t>(id)].u = std::move(res.u);
        ev.spectral[static_cast<size_t>(id)].v = std::move(res.v);
        break;
      }
    }
  }
  return ev;
}

std::map<std::string, Array> Graph::backward(const Evaluation& eval, NodeId root) const {
  const Node& rn = node(root);
  if (!rn.shape.empty()) {
    fail(root, "backward root must be scalar, has shape " + shape_str(rn.shape));
  }
  if (eval.values.size() != nodes_.size()) throw std::runtime_error("Graph: stale evaluation");

  std::vector<std::vector<double>> grads(nodes_.size());
  auto grad_buf = [&](NodeId id) -> std::vector<double>& {
    auto& g = grads[static_cast<size_t>(id)];
    if (g.empty()) g.assign(eval.values[static_cast<size_t>(id)].data.size(), 0.0);
    return g;
  };
  grad_buf(root)[0] = 1.0;

  for (NodeId id = root; id >= 0; --id) {
    const Node& n = nodes_[static_cast<size_t>(id)];
    const auto& g = grads[static_cast<size_t>(id)];
    if (g.empty()) continue;
    auto val = [&](int i) -> const Array& { return eval.values[static_cast<size_t>(n.inputs[static_cast<size_t>(i)])]; };

    switch (n.kind) {
      case OpKind::kInput:
      case OpKind::kConst:
        break;
      case OpKind::kMatMul: {
        const Array& a = val(0);
        const Array& b = val(1);
        int r = a.shape[0], m = a.shape[1], c = b.shape[1];
        auto& da = grad_buf(n.inputs[0]);
        auto& db = grad_buf(n.inputs[1]);
        for (int i = 0; i < r; ++i) {
          for (int k = 0; k < m; ++k) {
            double acc = 0.0;
            for (int j = 0; j < c; ++j) acc += g[static_cast<size_t>(i) * c + j] * b.data[static_cast<size_t>(k) * c + j];
            da[static_cast<size_t>(i) * m + k] += acc;
          }
        }
        for (int k = 0; k < m; ++k) {
          for (int j = 0; j < c; ++j) {
            double acc = 0.0;
            for (int i = 0; i < r; ++i) acc += a.data[static_cast<size_t>(i) * m + k] * g[static_cast<size_t>(i) * c + j];
            db[static_cast<size_t>(k) * c + j] += acc;
          }
        }
        break;
      }
      case OpKind::kTranspose: {
        const Array& a = val(0);
        int r = a.shape[0], c = a.shape[1];
        auto& da = grad_buf(n.inputs[0]);
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j)
            da[static_cast<size_t>(i) * c + j] += g[static_cast<size_t>(j) * r + i];
        break;
      }
      case OpKind::kReshape: {
        auto& da = grad_buf(n.inputs[0]);
        for (size_t i = 0; i < g.size(); ++i) da[i] += g[i];
        break;
      }
      case OpKind::kConv2d: {
        const Array& x = val(0);
        const Array& k = val(1);
        int h = x.shape[0], w = x.shape[1], ci = x.shape[2];
        int co = k.shape[0], kh = k.shape[2], kw = k.shape[3];
        int stride = n.i0, pad = n.i1;
        int ho = n.shape[0], wo = n.shape[1];
        auto& dx = grad_buf(n.inputs[0]);
        auto& dk = grad_buf(n.inputs[1]);
        for (int oy = 0; oy < ho; ++oy) {
          for (int ox = 0; ox < wo; ++ox) {
            for (int o = 0; o < co; ++o) {
              double go = g[(static_cast<size_t>(oy) * wo + ox) * co + o];
              if (go == 0.0) continue;
              for (int i = 0; i < ci; ++i) {
                for (int ky = 0; ky < kh; ++ky) {
                  int iy = oy * stride - pad + ky;
                  if (iy < 0 || iy >= h) continue;
                  for (int kx = 0; kx < kw; ++kx) {
                    int ix = ox * stride - pad + kx;
                    if (ix < 0 || ix >= w) continue;
                    size_t xoff = (static_cast<size_t>(iy) * w + ix) * ci + i;
                    size_t koff = ((static_cast<size_t>(o) * ci + i) * kh + ky) * kw + kx;
                    dk[koff] += go * x.data[xoff];
                    dx[xoff] += go * k.data[koff];
                  }
                }
              }
            }
          }
        }
        break;
      }
      case OpKind::kAdd: {
        auto& da = grad_buf(n.inputs[0]);
        auto& db = grad_buf(n.inputs[1]);
        for (size_t i = 0; i < g.size(); ++i) da[i] += g[i];
        if (n.i0) {
          int c = val(1).shape[0];
          int64_t rows = static_cast<int64_t>(g.size()) / c;
          for (int64_t r = 0; r < rows; ++r)
            for (int j = 0; j < c; ++j) db[static_cast<size_t>(j)] += g[static_cast<size_t>(r * c + j)];
        } else {
          for (size_t i = 0; i < g.size(); ++i) db[i] += g[i];
        }
        break;
      }
      case OpKind::kSub: {
        auto& da = grad_buf(n.inputs[0]);
        auto& db = grad_buf(n.inputs[1]);
        for (size_t i = 0; i < g.size(); ++i) {
          da[i] += g[i];
          db[i] -= g[i];
        }
        break;
      }
      case OpKind::kMul: {
        const Array& a = val(0);
        const Array& b = val(1);
        auto& da = grad_buf(n.inputs[0]);
        auto& db = grad_buf(n.inputs[1]);
        for (size_t i = 0; i < g.size(); ++i) {
          da[i] += g[i] * b.data[i];
          db[i] += g[i] * a.data[i];
        }
        break;
      }
      case OpKind::kDiv: {
        const Array& a = val(0);
        const Array& b = val(1);
        auto& da = grad_buf(n.inputs[0]);
        auto& db = grad_buf(n.inputs[1]);
        for (size_t i = 0; i < g.size(); ++i) {
          double bi = b.data[i];
          da[i] += g[i] / bi;
          db[i] -= g[i] * a.data[i] / (bi * bi);
        }
        break;
      }
      case OpKind::kAffine: {
        auto& da = grad_buf(n.inputs[0]);
        for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * n.d0;
        break;
      }
      case OpKind::kLeakyRelu: {
        const Array& a = val(0);
        auto& da = grad_buf(n.inputs[0]);
        for (size_t i = 0; i < g.size(); ++i) da[i] += a.data[i] >= 0.0f ? g[i] : g[i] * n.d0;
        break;
      }
      case OpKind::kSigmoid: {
        const Array& y = eval.values[static_cast<size_t>(id)];
        auto& da = grad_buf(n.inputs[0]);
        for (size_t i = 0; i < g.size(); ++i) {
          double s = y.data[i];
          da[i] += g[i] * s * (1.0 - s);
        }
        break;
      }
      case OpKind::kLog: {
        const Array& a = val(0);
        auto& da = grad_buf(n.inputs[0]);
        for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] / a.data[i];
        break;
      }
      case OpKind::kExp: {
        const Array& y = eval.values[static_cast<size_t>(id)];
        auto& da = grad_buf(n.inputs[0]);
        for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * y.data[i];
        break;
      }
      case OpKind::kSqrt: {
        const Array& y = eval.values[static_cast<size_t>(id)];
        auto& da = grad_buf(n.inputs[0]);
        for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * 0.5 / y.data[i];
        break;
      }
      case OpKind::kAtan: {
        const Array& a = val(0);
        auto& da = grad_buf(n.inputs[0]);
        for (size_t i = 0; i < g.size(); ++i) {
          double x = a.data[i];
          da[i] += g[i] / (1.0 + x * x);
        }
        break;
      }
      case OpKind::kPowConst: {
        const Array& a = val(0);
        auto& da = grad_buf(n.inputs[0]);
        for (size_t i = 0; i < g.size(); ++i) {
          da[i] += g[i] * n.d0 * std::pow(static_cast<double>(a.data[i]), n.d0 - 1.0);
        }
        break;
      }
      case OpKind::kMin: {
        const Array& a = val(0);
        const Array& b = val(1);
        auto& da = grad_buf(n.inputs[0]);
        auto& db = grad_buf(n.inputs[1]);
        for (size_t i = 0; i < g.size(); ++i) {
          if (a.data[i] <= b.data[i]) da[i] += g[i];
          else db[i] += g[i];
        }
        break;
      }
      case OpKind::kMax: {
        const Array& a = val(0);
        const Array& b = val(1);
        auto& da = grad_buf(n.inputs[0]);
        auto& db = grad_buf(n.inputs[1]);
        for (size_t i = 0; i < g.size(); ++i) {
          if (a.data[i] >= b.data[i]) da[i] += g[i];
          else db[i] += g[i];
        }
        break;
      }
      case OpKind::kClamp: {
        const Array& a = val(0);
        auto& da = grad_buf(n.inputs[0]);
        for (size_t i = 0; i < g.size(); ++i) {
          if (a.data[i] >= n.d0 && a.data[i] <= n.d1) da[i] += g[i];
        }
        break;
      }
      case OpKind::kSoftmaxRows: {
        const Array& p = eval.values[static_cast<size_t>(id)];
        int rows = p.shape[0], k = p.shape[1];
        auto& da = grad_buf(n.inputs[0]);
        for (int r = 0; r < rows; ++r) {
          const float* pr = p.data.data() + static_cast<size_t>(r) * k;
          const double* gr = g.data() + static_cast<size_t>(r) * k;
          double dot = 0.0;
          for (int j = 0; j < k; ++j) dot += gr[j] * pr[j];
          for (int j = 0; j < k; ++j) da[static_cast<size_t>(r) * k + j] += pr[j] * (gr[j] - dot);
        }
        break;
      }
      case OpKind::kSoftmaxXent: {
        const Array& logits = val(0);
        const Array& targets = val(1);
        int rows = logits.shape[0], k = logits.shape[1];
        auto& dl = grad_buf(n.inputs[0]);
        auto& dt = grad_buf(n.inputs[1]);
        for (int r = 0; r < rows; ++r) {
          const float* x = logits.data.data() + static_cast<size_t>(r) * k;
          const float* t = targets.data.data() + static_cast<size_t>(r) * k;
          double mx = x[0];
          for (int j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(x[j]));
          double denom = 0.0;
          for (int j = 0; j < k; ++j) denom += std::exp(static_cast<double>(x[j]) - mx);
          double gr = g[static_cast<size_t>(r)];
          for (int j = 0; j < k; ++j) {
            double p = std::exp(static_cast<double>(x[j]) - mx) / denom;
            dl[static_cast<size_t>(r) * k + j] += gr * (p - static_cast<double>(t[j]));
            dt[static_cast<size_t>(r) * k + j] += gr * (-static_cast<double>(x[j]));
          }
        }
        break;
      }
      case OpKind::kGather: {
        auto& da = grad_buf(n.inputs[0]);
        for (size_t i = 0; i < n.indices.size(); ++i) da[static_cast<size_t>(n.indices[i])] += g[i];
        break;
      }
      case OpKind::kSum: {
        auto& da = grad_buf(n.inputs[0]);
        for (auto& d : da) d += g[0];
        break;
      }
      case OpKind::kMean: {
        auto& da = grad_buf(n.inputs[0]);
        double scale = g[0] / static_cast<double>(da.size());
        for (auto& d : da) d += scale;
        break;
      }
      case OpKind::kSpectralNorm: {
        const auto& aux = eval.spectral[static_cast<size_t>(id)];
        const Array& a = val(0);
        int r = a.shape[0], c = a.shape[1];
        auto& da = grad_buf(n.inputs[0]);
        // d(sigma)/dM = u v^T, singular vectors treated constant.
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j)
            da[static_cast<size_t>(i) * c + j] += g[0] * aux.u[static_cast<size_t>(i)] * aux.v[static_cast<size_t>(j)];
        break;
      }
    }
  }

  std::map<std::string, Array> result;
  for (const auto& [name, id] : input_names_) {
    const auto& buf = grads[static_cast<size_t>(id)];
    Array grad = Array::zeros(nodes_[static_cast<size_t>(id)].shape);
    if (!buf.empty()) {
      for (size_t i = 0; i < buf.size(); ++i) grad.data[i] = static_cast<float>(buf[i]);
    }
    result[name] = std::move(grad);
  }
  return result;
}

ForwardBackward Graph::forward_backward(const std::map<std::string, Array>& bindings, NodeId root) const {
  Evaluation ev = forward(bindings);
  ForwardBackward fb;
  fb.value = ev.value(root);
  fb.gradients = backward(ev, root);
  return fb;
}

}  // namespace fedsto::ad
