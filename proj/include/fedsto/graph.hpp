#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedsto/array.hpp"

namespace fedsto::ad {

using NodeId = int;

enum class OpKind {
  kInput,
  kConst,
  kMatMul,
  kTranspose,
  kReshape,
  kConv2d,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kAffine,
  kLeakyRelu,
  kSigmoid,
  kLog,
  kExp,
  kSqrt,
  kAtan,
  kPowConst,
  kMin,
  kMax,
  kClamp,
  kSoftmaxRows,
  kSoftmaxXent,
  kGather,
  kSum,
  kMean,
  kSpectralNorm,
};

const char* op_name(OpKind kind);

// Holds per-node forward values for one evaluation of a Graph.
struct Evaluation {
  std::vector<Array> values;

  struct SpectralAux {
    std::vector<double> u, v;
  };
  std::vector<SpectralAux> spectral;

  const Array& value(NodeId id) const { return values.at(static_cast<size_t>(id)); }
};

struct ForwardBackward {
  Array value;
  std::map<std::string, Array> gradients;
};

// Static computation graph over float32 arrays. Nodes are appended in
// topological order by construction; evaluation walks them forward and the
// backward pass walks them in exact reverse order. Graphs are immutable once
// built and safe to share across threads for read-only evaluation.
class Graph {
 public:
  NodeId input(const std::string& name, std::vector<int> shape);
  NodeId constant(Array value);

  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId reshape(NodeId a, std::vector<int> shape);
  // 2-D cross-correlation: x is (H,W,Cin), k is (Cout,Cin,KH,KW).
  NodeId conv2d(NodeId x, NodeId k, int stride, int pad);

  // Elementwise; add() also accepts a rank-1 right operand matching the last
  // dimension of the left operand (bias add), the only broadcast supported.
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId affine(NodeId a, double scale, double shift);
  NodeId leaky_relu(NodeId a, double slope);
  NodeId sigmoid(NodeId a);
  NodeId log(NodeId a);
  NodeId exp(NodeId a);
  NodeId sqrt(NodeId a);
  NodeId atan(NodeId a);
  NodeId pow_const(NodeId a, double exponent);
  NodeId min(NodeId a, NodeId b);
  NodeId max(NodeId a, NodeId b);
  NodeId clamp(NodeId a, double lo, double hi);

  // Row-wise softmax over a (N,K) matrix.
  NodeId softmax_rows(NodeId a);
  // Per-row cross-entropy -sum_k t log softmax(x) for (N,K) logits and
  // targets whose rows sum to 1; yields shape (N,).
  NodeId softmax_xent(NodeId logits, NodeId targets);
  // Picks flat row-major offsets out of any array; yields shape (N,).
  NodeId gather(NodeId a, std::vector<int64_t> indices);

  NodeId sum(NodeId a);
  NodeId mean(NodeId a);

  // Largest singular value via power iteration; differentiable through the
  // rank-1 outer product of the converged singular vectors.
  NodeId spectral_norm(NodeId a, int iterations, uint64_t seed = 0x5eedf00dULL);

  const std::vector<int>& shape_of(NodeId id) const;
  int node_count() const { return static_cast<int>(nodes_.size()); }

  Evaluation forward(const std::map<std::string, Array>& bindings) const;
  // Root must be scalar (shape {}); returns d(root)/d(input) per input name.
  std::map<std::string, Array> backward(const Evaluation& eval, NodeId root) const;
  ForwardBackward forward_backward(const std::map<std::string, Array>& bindings, NodeId root) const;

 private:
  struct Node {
    OpKind kind;
    std::vector<int> shape;
    std::vector<NodeId> inputs;
    std::string name;               // kInput
    Array value;                    // kConst
    int i0 = 0, i1 = 0;             // stride/pad, iterations
    double d0 = 0.0, d1 = 0.0;      // slope, scale/shift, lo/hi, exponent
    uint64_t seed = 0;              // kSpectralNorm
    std::vector<int64_t> indices;   // kGather
  };

  NodeId push(Node node);
  const Node& node(NodeId id) const;
  [[noreturn]] void fail(NodeId id, const std::string& message) const;
  void check_same_shape(OpKind kind, NodeId a, NodeId b) const;

  std::vector<Node> nodes_;
  std::map<std::string, NodeId> input_names_;
};

}  // namespace fedsto::ad
