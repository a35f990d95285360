#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prognosis/tensor.hpp"

namespace prognosis {

/// Name -> tensor map; ordered so that iteration (and thus training) is reproducible.
using NamedTensors = std::map<std::string, Tensor>;

/// Handle to a node inside one Graph.
struct NodeRef {
  std::size_t index = static_cast<std::size_t>(-1);
  bool valid() const noexcept { return index != static_cast<std::size_t>(-1); }
  friend bool operator==(NodeRef, NodeRef) = default;
};

enum class Op {
  Input,
  Parameter,
  Constant,
  Affine,
  MatMul,
  Conv2d,
  Relu,
  Sigmoid,
  Tanh,
  Softmax,
  MaxPool2d,
  GlobalMaxPool,
  Mul,
  Add,
  Sub,
  Scale,
  AddScalar,
  Concat,
  Mean,
  Sum,
  AbsSum,
  Reshape,
  Select,
  Log,
  TopRMean,
};

const char* op_name(Op op) noexcept;

/// Define-by-run computation graph.
///
/// Every builder call evaluates its node immediately and appends it to the
/// tape, so insertion order is a topological order. `evaluate` replays the
/// tape with new input/parameter values and `backward` runs reverse-mode
/// differentiation from a scalar node.
class Graph {
 public:
  NodeRef input(std::string name, Tensor value, bool requires_grad = false);
  NodeRef parameter(std::string name, Tensor value);
  NodeRef constant(Tensor value);

  /// x:[in] or [N,in], weight:[out,in], optional bias:[out].
  NodeRef affine(NodeRef x, NodeRef weight, std::optional<NodeRef> bias = std::nullopt);
  NodeRef matmul(NodeRef a, NodeRef b);
  /// x:[C,H,W], weight:[O,C,kh,kw], bias:[O].
  NodeRef conv2d(NodeRef x, NodeRef weight, NodeRef bias, std::size_t stride = 1,
                 std::size_t padding = 0);
  NodeRef relu(NodeRef x);
  NodeRef sigmoid(NodeRef x);
  NodeRef tanh(NodeRef x);
  NodeRef softmax(NodeRef x, std::size_t axis);
  /// x:[C,H,W]; output spatial size floor((H - k) / stride) + 1.
  NodeRef max_pool2d(NodeRef x, std::size_t kernel, std::size_t stride);
  /// x:[C,H,W] -> [C].
  NodeRef global_max_pool(NodeRef x);
  NodeRef mul(NodeRef a, NodeRef b);
  NodeRef add(NodeRef a, NodeRef b);
  NodeRef sub(NodeRef a, NodeRef b);
  NodeRef scale(NodeRef x, double factor);
  NodeRef add_scalar(NodeRef x, double offset);
  NodeRef concat(const std::vector<NodeRef>& parts, std::size_t axis);
  NodeRef mean(NodeRef x, std::vector<std::size_t> axes);
  NodeRef sum(NodeRef x);
  NodeRef abs_sum(NodeRef x);
  NodeRef reshape(NodeRef x, Shape shape);
  /// Slice `index` along axis 0; drops that axis (rank-1 input yields shape {1}).
  NodeRef select(NodeRef x, std::size_t index);
  /// ln(clamp(x, lo, hi)); gradient is zero where the clamp is active.
  NodeRef log(NodeRef x, double lo = 1e-12, double hi = 1.0 - 1e-12);
  /// Mean of the ceil(r * numel) largest entries.
  NodeRef topr_mean(NodeRef x, double fraction);

  const Tensor& value(NodeRef node) const;
  Op op(NodeRef node) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gives a node a name so `evaluate` can return it.
  void mark_output(const std::string& name, NodeRef node);

  /// Replays the tape. `feeds` may override any named input or parameter;
  /// returns every marked output.
  NamedTensors evaluate(const NamedTensors& feeds = {});

  /// Reverse pass from a scalar node. Returns one gradient per named node
  /// with requires_grad (parameters always; inputs when requested). Nodes the
  /// loss does not reach receive zeros.
  NamedTensors backward(NodeRef loss) const;

 private:
  struct Node {
    Op op = Op::Constant;
    std::vector<std::size_t> inputs;
    Tensor value;
    std::string name;
    bool requires_grad = false;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t kernel = 0;
    std::size_t index = 0;
    std::vector<std::size_t> axes;
    Shape shape;
    double scalar = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::vector<std::size_t> argmax;
  };

  NodeRef push(Node node);
  void compute(Node& node);
  void propagate(const Node& node, const Tensor& grad, std::vector<Tensor>& grads,
                 const std::vector<bool>& needs) const;
  const Node& at(NodeRef ref) const;
  std::string describe(const Node& node, std::size_t index) const;

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> named_;
  std::map<std::string, std::size_t> outputs_;
};

}  // namespace prognosis
