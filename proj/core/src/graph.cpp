#include "prognosis/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prognosis/error.hpp"
#include "prognosis/topr.hpp"

namespace prognosis {

const char* op_name(Op op) noexcept {
  switch (op) {
    case Op::Input: return "input";
    case Op::Parameter: return "parameter";
    case Op::Constant: return "constant";
    case Op::Affine: return "affine";
    case Op::MatMul: return "matmul";
    case Op::Conv2d: return "conv2d";
    case Op::Relu: return "relu";
    case Op::Sigmoid: return "sigmoid";
    case Op::Tanh: return "tanh";
    case Op::Softmax: return "softmax";
    case Op::MaxPool2d: return "max_pool2d";
    case Op::GlobalMaxPool: return "global_max_pool";
    case Op::Mul: return "mul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::Concat: return "concat";
    case Op::Mean: return "mean";
    case Op::Sum: return "sum";
    case Op::AbsSum: return "abs_sum";
    case Op::Reshape: return "reshape";
    case Op::Select: return "select";
    case Op::Log: return "log";
    case Op::TopRMean: return "topr_mean";
  }
  return "unknown";
}

namespace {

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ShapeError(message);
}

void require_same_shape(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(),
          "operand shapes differ: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

void add_into(Tensor& dst, const Tensor& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

// Splits a shape around `axis` into (outer, axis length, inner) extents.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t length = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.length = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// For a reduction over `axes`, maps each input flat index to its output flat index.
std::vector<std::size_t> reduction_map(const Shape& shape, const std::vector<std::size_t>& axes,
                                       Shape& out_shape) {
  std::vector<bool> reduced(shape.size(), false);
  for (auto a : axes) reduced.at(a) = true;
  out_shape.clear();
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (!reduced[i]) out_shape.push_back(shape[i]);
  }
  if (out_shape.empty()) out_shape.push_back(1);

  const std::size_t n = shape_numel(shape);
  std::vector<std::size_t> map(n, 0);
  std::vector<std::size_t> idx(shape.size(), 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t out = 0;
    for (std::size_t d = 0; d < shape.size(); ++d) {
      if (!reduced[d]) out = out * shape[d] + idx[d];
    }
    map[flat] = out;
    for (std::size_t d = shape.size(); d-- > 0;) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  return map;
}

void conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
                    std::size_t pad, Tensor& out) {
  const std::size_t channels = x.dim(0), height = x.dim(1), width = x.dim(2);
  const std::size_t filters = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t oh = out.dim(1), ow = out.dim(2);
  const double* xp = x.data();
  const double* wp = w.data();
  double* op = out.data();
  const auto ipad = static_cast<std::ptrdiff_t>(pad);
  const auto istride = static_cast<std::ptrdiff_t>(stride);
  for (std::size_t o = 0; o < filters; ++o) {
    double* oplane = op + o * oh * ow;
    std::fill(oplane, oplane + oh * ow, b[o]);
    for (std::size_t c = 0; c < channels; ++c) {
      const double* xplane = xp + c * height * width;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const double wv = wp[((o * channels + c) * kh + ky) * kw + kx];
          // Valid ox range: 0 <= ox*stride + kx - pad < width.
          const auto shift = static_cast<std::ptrdiff_t>(kx) - ipad;
          std::ptrdiff_t ox_lo = 0;
          if (shift < 0) ox_lo = (-shift + istride - 1) / istride;
          std::ptrdiff_t ox_hi = static_cast<std::ptrdiff_t>(ow);
          const std::ptrdiff_t limit = static_cast<std::ptrdiff_t>(width) - shift;  // ox*stride < limit
          if (limit <= 0) continue;
          ox_hi = std::min(ox_hi, (limit + istride - 1) / istride);
          if (ox_lo >= ox_hi) continue;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * istride +
                                      static_cast<std::ptrdiff_t>(ky) - ipad;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
            const double* xrow = xplane + iy * static_cast<std::ptrdiff_t>(width) + shift;
            double* orow = oplane + oy * ow;
            if (stride == 1) {
              for (std::ptrdiff_t ox = ox_lo; ox < ox_hi; ++ox) orow[ox] += wv * xrow[ox];
            } else {
              for (std::ptrdiff_t ox = ox_lo; ox < ox_hi; ++ox) orow[ox] += wv * xrow[ox * istride];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad,
                     const Tensor& g, Tensor* gx, Tensor* gw, Tensor* gb) {
  const std::size_t channels = x.dim(0), height = x.dim(1), width = x.dim(2);
  const std::size_t filters = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t oh = g.dim(1), ow = g.dim(2);
  const double* xp = x.data();
  const double* wp = w.data();
  const double* gp = g.data();
  const auto ipad = static_cast<std::ptrdiff_t>(pad);
  const auto istride = static_cast<std::ptrdiff_t>(stride);
  for (std::size_t o = 0; o < filters; ++o) {
    const double* gplane = gp + o * oh * ow;
    if (gb) {
      double acc = 0.0;
      for (std::size_t i = 0; i < oh * ow; ++i) acc += gplane[i];
      (*gb)[o] += acc;
    }
    for (std::size_t c = 0; c < channels; ++c) {
      const double* xplane = xp + c * height * width;
      double* gxplane = gx ? gx->data() + c * height * width : nullptr;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const std::size_t widx = ((o * channels + c) * kh + ky) * kw + kx;
          const double wv = wp[widx];
          const auto shift = static_cast<std::ptrdiff_t>(kx) - ipad;
          std::ptrdiff_t ox_lo = 0;
          if (shift < 0) ox_lo = (-shift + istride - 1) / istride;
          const std::ptrdiff_t limit = static_cast<std::ptrdiff_t>(width) - shift;
          if (limit <= 0) continue;
          const std::ptrdiff_t ox_hi =
              std::min(static_cast<std::ptrdiff_t>(ow), (limit + istride - 1) / istride);
          if (ox_lo >= ox_hi) continue;
          double wacc = 0.0;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * istride +
                                      static_cast<std::ptrdiff_t>(ky) - ipad;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
            const std::ptrdiff_t row = iy * static_cast<std::ptrdiff_t>(width) + shift;
            const double* grow = gplane + oy * ow;
            for (std::ptrdiff_t ox = ox_lo; ox < ox_hi; ++ox) {
              const std::ptrdiff_t xi = row + ox * istride;
              wacc += grow[ox] * xplane[xi];
              if (gxplane) gxplane[xi] += wv * grow[ox];
            }
          }
          if (gw) (*gw)[widx] += wacc;
        }
      }
    }
  }
}

}  // namespace

NodeRef Graph::push(Node node) {
  const std::size_t index = nodes_.size();
  try {
    compute(node);
  } catch (const ShapeError& e) {
    throw ShapeError(describe(node, index) + ": " + e.what());
  }
  nodes_.push_back(std::move(node));
  return NodeRef{index};
}

std::string Graph::describe(const Node& node, std::size_t index) const {
  std::string s = "node #" + std::to_string(index) + " (" + op_name(node.op);
  if (!node.name.empty()) s += " '" + node.name + "'";
  return s + ")";
}

const Graph::Node& Graph::at(NodeRef ref) const {
  if (!ref.valid() || ref.index >= nodes_.size()) {
    throw Error("invalid node reference " + std::to_string(ref.index));
  }
  return nodes_[ref.index];
}

NodeRef Graph::input(std::string name, Tensor value, bool requires_grad) {
  if (!value.all_finite()) throw Error("non-finite values in input '" + name + "'");
  if (named_.count(name)) throw Error("duplicate node name '" + name + "'");
  Node n;
  n.op = Op::Input;
  n.name = name;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  auto ref = push(std::move(n));
  named_[name] = ref.index;
  return ref;
}

NodeRef Graph::parameter(std::string name, Tensor value) {
  if (named_.count(name)) throw Error("duplicate node name '" + name + "'");
  Node n;
  n.op = Op::Parameter;
  n.name = name;
  n.value = std::move(value);
  n.requires_grad = true;
  auto ref = push(std::move(n));
  named_[name] = ref.index;
  return ref;
}

NodeRef Graph::constant(Tensor value) {
  Node n;
  n.op = Op::Constant;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeRef Graph::affine(NodeRef x, NodeRef weight, std::optional<NodeRef> bias) {
  Node n;
  n.op = Op::Affine;
  at(x), at(weight);
  n.inputs = {x.index, weight.index};
  if (bias) {
    at(*bias);
    n.inputs.push_back(bias->index);
  }
  return push(std::move(n));
}

NodeRef Graph::matmul(NodeRef a, NodeRef b) {
  at(a), at(b);
  Node n;
  n.op = Op::MatMul;
  n.inputs = {a.index, b.index};
  return push(std::move(n));
}

NodeRef Graph::conv2d(NodeRef x, NodeRef weight, NodeRef bias, std::size_t stride,
                      std::size_t padding) {
  at(x), at(weight), at(bias);
  if (stride == 0) throw ShapeError("conv2d stride must be positive");
  Node n;
  n.op = Op::Conv2d;
  n.inputs = {x.index, weight.index, bias.index};
  n.stride = stride;
  n.padding = padding;
  return push(std::move(n));
}

#define PROGNOSIS_UNARY(method, opcode) \
  NodeRef Graph::method(NodeRef x) {    \
    at(x);                              \
    Node n;                             \
    n.op = opcode;                      \
    n.inputs = {x.index};               \
    return push(std::move(n));          \
  }

PROGNOSIS_UNARY(relu, Op::Relu)
PROGNOSIS_UNARY(sigmoid, Op::Sigmoid)
PROGNOSIS_UNARY(tanh, Op::Tanh)
PROGNOSIS_UNARY(global_max_pool, Op::GlobalMaxPool)
PROGNOSIS_UNARY(sum, Op::Sum)
PROGNOSIS_UNARY(abs_sum, Op::AbsSum)
#undef PROGNOSIS_UNARY

#define PROGNOSIS_BINARY(method, opcode)     \
  NodeRef Graph::method(NodeRef a, NodeRef b) { \
    at(a), at(b);                             \
    Node n;                                   \
    n.op = opcode;                            \
    n.inputs = {a.index, b.index};            \
    return push(std::move(n));                \
  }

PROGNOSIS_BINARY(mul, Op::Mul)
PROGNOSIS_BINARY(add, Op::Add)
PROGNOSIS_BINARY(sub, Op::Sub)
#undef PROGNOSIS_BINARY

NodeRef Graph::softmax(NodeRef x, std::size_t axis) {
  at(x);
  Node n;
  n.op = Op::Softmax;
  n.inputs = {x.index};
  n.index = axis;
  return push(std::move(n));
}

NodeRef Graph::max_pool2d(NodeRef x, std::size_t kernel, std::size_t stride) {
  at(x);
  if (kernel == 0 || stride == 0) throw ShapeError("max_pool2d kernel and stride must be positive");
  Node n;
  n.op = Op::MaxPool2d;
  n.inputs = {x.index};
  n.kernel = kernel;
  n.stride = stride;
  return push(std::move(n));
}

NodeRef Graph::scale(NodeRef x, double factor) {
  at(x);
  Node n;
  n.op = Op::Scale;
  n.inputs = {x.index};
  n.scalar = factor;
  return push(std::move(n));
}

NodeRef Graph::add_scalar(NodeRef x, double offset) {
  at(x);
  Node n;
  n.op = Op::AddScalar;
  n.inputs = {x.index};
  n.scalar = offset;
  return push(std::move(n));
}

NodeRef Graph::concat(const std::vector<NodeRef>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Node n;
  n.op = Op::Concat;
  for (auto p : parts) {
    at(p);
    n.inputs.push_back(p.index);
  }
  n.index = axis;
  return push(std::move(n));
}

NodeRef Graph::mean(NodeRef x, std::vector<std::size_t> axes) {
  at(x);
  Node n;
  n.op = Op::Mean;
  n.inputs = {x.index};
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  n.axes = std::move(axes);
  return push(std::move(n));
}

NodeRef Graph::reshape(NodeRef x, Shape shape) {
  at(x);
  Node n;
  n.op = Op::Reshape;
  n.inputs = {x.index};
  n.shape = std::move(shape);
  return push(std::move(n));
}

NodeRef Graph::select(NodeRef x, std::size_t index) {
  at(x);
  Node n;
  n.op = Op::Select;
  n.inputs = {x.index};
  n.index = index;
  return push(std::move(n));
}

NodeRef Graph::log(NodeRef x, double lo, double hi) {
  at(x);
  if (!(lo > 0.0) || !(hi >= lo)) throw Error("log clamp bounds must satisfy 0 < lo <= hi");
  Node n;
  n.op = Op::Log;
  n.inputs = {x.index};
  n.lo = lo;
  n.hi = hi;
  return push(std::move(n));
}

NodeRef Graph::topr_mean(NodeRef x, double fraction) {
  at(x);
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("topr_mean fraction must lie in (0, 1]");
  Node n;
  n.op = Op::TopRMean;
  n.inputs = {x.index};
  n.scalar = fraction;
  return push(std::move(n));
}

const Tensor& Graph::value(NodeRef node) const { return at(node).value; }

Op Graph::op(NodeRef node) const { return at(node).op; }

void Graph::mark_output(const std::string& name, NodeRef node) {
  at(node);
  outputs_[name] = node.index;
}

void Graph::compute(Node& node) {
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_.at(node.inputs[k]).value; };

  switch (node.op) {
    case Op::Input:
    case Op::Parameter:
    case Op::Constant:
      require(!node.value.empty(), "leaf node has no value");
      return;

    case Op::Affine: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      require(w.rank() == 2, "affine weight must be rank 2, got " + to_string(w.shape()));
      const std::size_t out_dim = w.dim(0), in_dim = w.dim(1);
      require(x.rank() == 1 || x.rank() == 2, "affine input must be rank 1 or 2");
      require(x.shape().back() == in_dim, "affine input " + to_string(x.shape()) +
                                              " incompatible with weight " + to_string(w.shape()));
      const Tensor* b = node.inputs.size() > 2 ? &in(2) : nullptr;
      if (b) require(b->shape() == Shape{out_dim}, "affine bias shape " + to_string(b->shape()));
      const std::size_t rows = x.rank() == 2 ? x.dim(0) : 1;
      Tensor out(x.rank() == 2 ? Shape{rows, out_dim} : Shape{out_dim});
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * in_dim;
        for (std::size_t o = 0; o < out_dim; ++o) {
          const double* wr = w.data() + o * in_dim;
          double acc = b ? (*b)[o] : 0.0;
          for (std::size_t i = 0; i < in_dim; ++i) acc += wr[i] * xr[i];
          out[r * out_dim + o] = acc;
        }
      }
      node.value = std::move(out);
      return;
    }

    case Op::MatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
              "matmul shapes " + to_string(a.shape()) + " x " + to_string(b.shape()));
      const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
      Tensor out({m, n});
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = a[i * k + p];
          for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * b[p * n + j];
        }
      node.value = std::move(out);
      return;
    }

    case Op::Conv2d: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const Tensor& b = in(2);
      require(x.rank() == 3, "conv2d input must be [C,H,W], got " + to_string(x.shape()));
      require(w.rank() == 4 && w.dim(1) == x.dim(0),
              "conv2d weight " + to_string(w.shape()) + " incompatible with input " +
                  to_string(x.shape()));
      require(b.shape() == Shape{w.dim(0)}, "conv2d bias shape " + to_string(b.shape()));
      const std::size_t ph = x.dim(1) + 2 * node.padding, pw = x.dim(2) + 2 * node.padding;
      require(ph >= w.dim(2) && pw >= w.dim(3), "conv2d kernel larger than padded input");
      const std::size_t oh = (ph - w.dim(2)) / node.stride + 1;
      const std::size_t ow = (pw - w.dim(3)) / node.stride + 1;
      Tensor out({w.dim(0), oh, ow});
      conv2d_forward(x, w, b, node.stride, node.padding, out);
      node.value = std::move(out);
      return;
    }

    case Op::Relu: {
      Tensor out = in(0);
      for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
      out.set_requires_grad(false);
      node.value = std::move(out);
      return;
    }
    case Op::Sigmoid: {
      Tensor out = in(0);
      for (auto& v : out.values()) v = sigmoid_scalar(v);
      out.set_requires_grad(false);
      node.value = std::move(out);
      return;
    }
    case Op::Tanh: {
      Tensor out = in(0);
      for (auto& v : out.values()) v = std::tanh(v);
      out.set_requires_grad(false);
      node.value = std::move(out);
      return;
    }

    case Op::Softmax: {
      const Tensor& x = in(0);
      require(node.index < x.rank(), "softmax axis out of range");
      const auto s = split_at(x.shape(), node.index);
      Tensor out(x.shape());
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i) {
          const std::size_t base = o * s.length * s.inner + i;
          double mx = x[base];
          for (std::size_t a = 1; a < s.length; ++a) mx = std::max(mx, x[base + a * s.inner]);
          double total = 0.0;
          for (std::size_t a = 0; a < s.length; ++a) {
            const double e = std::exp(x[base + a * s.inner] - mx);
            out[base + a * s.inner] = e;
            total += e;
          }
          for (std::size_t a = 0; a < s.length; ++a) out[base + a * s.inner] /= total;
        }
      node.value = std::move(out);
      return;
    }

    case Op::MaxPool2d: {
      const Tensor& x = in(0);
      require(x.rank() == 3, "max_pool2d input must be [C,H,W], got " + to_string(x.shape()));
      require(x.dim(1) >= node.kernel && x.dim(2) >= node.kernel, "max_pool2d kernel larger than input");
      const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
      const std::size_t oh = (h - node.kernel) / node.stride + 1;
      const std::size_t ow = (w - node.kernel) / node.stride + 1;
      Tensor out({c, oh, ow});
      node.argmax.assign(out.numel(), 0);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t oy = 0; oy < oh; ++oy)
          for (std::size_t ox = 0; ox < ow; ++ox) {
            std::size_t best = (ch * h + oy * node.stride) * w + ox * node.stride;
            for (std::size_t ky = 0; ky < node.kernel; ++ky)
              for (std::size_t kx = 0; kx < node.kernel; ++kx) {
                const std::size_t idx = (ch * h + oy * node.stride + ky) * w + ox * node.stride + kx;
                if (x[idx] > x[best]) best = idx;
              }
            const std::size_t o = (ch * oh + oy) * ow + ox;
            out[o] = x[best];
            node.argmax[o] = best;
          }
      node.value = std::move(out);
      return;
    }

    case Op::GlobalMaxPool: {
      const Tensor& x = in(0);
      require(x.rank() == 3, "global_max_pool input must be [C,H,W], got " + to_string(x.shape()));
      const std::size_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
      Tensor out({c});
      node.argmax.assign(c, 0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::size_t best = ch * plane;
        for (std::size_t i = 1; i < plane; ++i)
          if (x[ch * plane + i] > x[best]) best = ch * plane + i;
        out[ch] = x[best];
        node.argmax[ch] = best;
      }
      node.value = std::move(out);
      return;
    }

    case Op::Mul:
    case Op::Add:
    case Op::Sub: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      require_same_shape(a, b);
      Tensor out(a.shape());
      for (std::size_t i = 0; i < out.numel(); ++i) {
        out[i] = node.op == Op::Mul ? a[i] * b[i] : node.op == Op::Add ? a[i] + b[i] : a[i] - b[i];
      }
      node.value = std::move(out);
      return;
    }

    case Op::Scale:
    case Op::AddScalar: {
      Tensor out(in(0).shape());
      const Tensor& x = in(0);
      for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] = node.op == Op::Scale ? x[i] * node.scalar : x[i] + node.scalar;
      node.value = std::move(out);
      return;
    }

    case Op::Concat: {
      const Tensor& first = in(0);
      require(node.index < first.rank(), "concat axis out of range");
      Shape shape = first.shape();
      shape[node.index] = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const Tensor& part = in(k);
        require(part.rank() == first.rank(), "concat rank mismatch");
        for (std::size_t d = 0; d < part.rank(); ++d) {
          if (d != node.index) {
            require(part.dim(d) == first.dim(d), "concat shape mismatch: " +
                                                     to_string(part.shape()) + " vs " +
                                                     to_string(first.shape()));
          }
        }
        shape[node.index] += part.dim(node.index);
      }
      Tensor out(shape);
      const auto s = split_at(shape, node.index);
      std::size_t offset = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const Tensor& part = in(k);
        const std::size_t len = part.dim(node.index) * s.inner;
        for (std::size_t o = 0; o < s.outer; ++o) {
          std::copy_n(part.data() + o * len, len, out.data() + o * s.length * s.inner + offset);
        }
        offset += len;
      }
      node.value = std::move(out);
      return;
    }

    case Op::Mean: {
      const Tensor& x = in(0);
      for (auto a : node.axes) require(a < x.rank(), "mean axis out of range");
      Shape out_shape;
      const auto map = reduction_map(x.shape(), node.axes, out_shape);
      Tensor out(out_shape);
      for (std::size_t i = 0; i < x.numel(); ++i) out[map[i]] += x[i];
      const double count = static_cast<double>(x.numel()) / static_cast<double>(out.numel());
      for (auto& v : out.values()) v /= count;
      node.value = std::move(out);
      return;
    }

    case Op::Sum:
    case Op::AbsSum: {
      double acc = 0.0;
      for (double v : in(0).values()) acc += node.op == Op::Sum ? v : std::abs(v);
      node.value = Tensor::scalar(acc);
      return;
    }

    case Op::Reshape: {
      require(shape_numel(node.shape) == in(0).numel(),
              "cannot reshape " + to_string(in(0).shape()) + " to " + to_string(node.shape));
      node.value = in(0).reshaped(node.shape);
      node.value.set_requires_grad(false);
      return;
    }

    case Op::Select: {
      const Tensor& x = in(0);
      require(node.index < x.dim(0), "select index " + std::to_string(node.index) +
                                         " out of range for " + to_string(x.shape()));
      Shape shape(x.shape().begin() + 1, x.shape().end());
      if (shape.empty()) shape.push_back(1);
      const std::size_t block = shape_numel(shape);
      Tensor out(shape);
      std::copy_n(x.data() + node.index * block, block, out.data());
      node.value = std::move(out);
      return;
    }

    case Op::Log: {
      Tensor out(in(0).shape());
      const Tensor& x = in(0);
      for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] = std::log(std::clamp(x[i], node.lo, node.hi));
      node.value = std::move(out);
      return;
    }

    case Op::TopRMean: {
      const Tensor& x = in(0);
      node.argmax = topr_indices(x.values(), node.scalar);
      double acc = 0.0;
      for (auto idx : node.argmax) acc += x[idx];
      node.value = Tensor::scalar(acc / static_cast<double>(node.argmax.size()));
      return;
    }
  }
}

NamedTensors Graph::evaluate(const NamedTensors& feeds) {
  for (const auto& [name, tensor] : feeds) {
    if (!named_.count(name)) throw Error("evaluate: unknown input '" + name + "'");
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& node = nodes_[i];
    if (node.op == Op::Input || node.op == Op::Parameter) {
      auto it = feeds.find(node.name);
      if (it == feeds.end()) continue;
      if (it->second.shape() != node.value.shape()) {
        throw ShapeError(describe(node, i) + ": expected shape " + to_string(node.value.shape()) +
                         ", got " + to_string(it->second.shape()));
      }
      if (!it->second.all_finite()) {
        throw Error(describe(node, i) + ": non-finite values");
      }
      node.value = it->second;
      continue;
    }
    if (node.op == Op::Constant) continue;
    try {
      compute(node);
    } catch (const ShapeError& e) {
      throw ShapeError(describe(node, i) + ": " + e.what());
    }
  }
  NamedTensors out;
  for (const auto& [name, index] : outputs_) out.emplace(name, nodes_[index].value);
  return out;
}

NamedTensors Graph::backward(NodeRef loss) const {
  const Node& root = at(loss);
  if (root.value.numel() != 1) {
    throw ShapeError("backward requires a scalar loss; " + describe(root, loss.index) +
                     " has shape " + to_string(root.value.shape()));
  }

  std::vector<bool> needs(nodes_.size(), false);
  for (std::size_t i = 0; i <= loss.index; ++i) {
    const Node& n = nodes_[i];
    bool need = n.requires_grad;
    for (auto j : n.inputs) need = need || needs[j];
    needs[i] = need;
  }

  std::vector<Tensor> grads(nodes_.size());
  grads[loss.index] = Tensor(root.value.shape(), 1.0);
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    if (grads[i].empty() || !needs[i]) continue;
    const Node& node = nodes_[i];
    if (node.inputs.empty()) continue;
    propagate(node, grads[i], grads, needs);
    if (node.op != Op::Parameter && node.op != Op::Input) grads[i] = Tensor();
  }

  NamedTensors out;
  for (const auto& [name, index] : named_) {
    const Node& n = nodes_[index];
    if (!n.requires_grad) continue;
    if (index <= loss.index && !grads[index].empty()) {
      out.emplace(name, grads[index]);
    } else {
      out.emplace(name, Tensor(n.value.shape(), 0.0));
    }
  }
  return out;
}

void Graph::propagate(const Node& node, const Tensor& g, std::vector<Tensor>& grads,
                      const std::vector<bool>& needs) const {
  // Inputs that cannot reach a differentiable leaf get a scratch buffer that is discarded.
  Tensor scratch;
  auto grad_of = [&](std::size_t k) -> Tensor& {
    const std::size_t idx = node.inputs[k];
    if (!needs[idx]) {
      scratch = Tensor(nodes_[idx].value.shape(), 0.0);
      return scratch;
    }
    if (grads[idx].empty()) grads[idx] = Tensor(nodes_[idx].value.shape(), 0.0);
    return grads[idx];
  };
  auto wants = [&](std::size_t k) { return static_cast<bool>(needs[node.inputs[k]]); };
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[node.inputs[k]].value; };
  const Tensor& y = node.value;

  switch (node.op) {
    case Op::Input:
    case Op::Parameter:
    case Op::Constant:
      return;

    case Op::Affine: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const std::size_t out_dim = w.dim(0), in_dim = w.dim(1);
      const std::size_t rows = x.rank() == 2 ? x.dim(0) : 1;
      Tensor& gx = grad_of(0);
      Tensor& gw = grad_of(1);
      Tensor* gb = node.inputs.size() > 2 ? &grad_of(2) : nullptr;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * in_dim;
        double* gxr = gx.data() + r * in_dim;
        for (std::size_t o = 0; o < out_dim; ++o) {
          const double go = g[r * out_dim + o];
          if (gb) (*gb)[o] += go;
          const double* wr = w.data() + o * in_dim;
          double* gwr = gw.data() + o * in_dim;
          for (std::size_t i = 0; i < in_dim; ++i) {
            gwr[i] += go * xr[i];
            gxr[i] += go * wr[i];
          }
        }
      }
      return;
    }

    case Op::MatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
      Tensor& ga = grad_of(0);
      Tensor& gb = grad_of(1);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            acc += g[i * n + j] * b[p * n + j];
            gb[p * n + j] += a[i * k + p] * g[i * n + j];
          }
          ga[i * k + p] += acc;
        }
      return;
    }

    case Op::Conv2d: {
      Tensor* gx = wants(0) ? &grad_of(0) : nullptr;
      Tensor* gw = wants(1) ? &grad_of(1) : nullptr;
      Tensor* gb = wants(2) ? &grad_of(2) : nullptr;
      conv2d_backward(in(0), in(1), node.stride, node.padding, g, gx, gw, gb);
      return;
    }

    case Op::Relu: {
      Tensor& gx = grad_of(0);
      const Tensor& x = in(0);
      for (std::size_t i = 0; i < g.numel(); ++i)
        if (x[i] > 0.0) gx[i] += g[i];
      return;
    }
    case Op::Sigmoid: {
      Tensor& gx = grad_of(0);
      for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
      return;
    }
    case Op::Tanh: {
      Tensor& gx = grad_of(0);
      for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
      return;
    }

    case Op::Softmax: {
      Tensor& gx = grad_of(0);
      const auto s = split_at(y.shape(), node.index);
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i) {
          const std::size_t base = o * s.length * s.inner + i;
          double dot = 0.0;
          for (std::size_t a = 0; a < s.length; ++a) {
            const std::size_t idx = base + a * s.inner;
            dot += g[idx] * y[idx];
          }
          for (std::size_t a = 0; a < s.length; ++a) {
            const std::size_t idx = base + a * s.inner;
            gx[idx] += y[idx] * (g[idx] - dot);
          }
        }
      return;
    }

    case Op::MaxPool2d:
    case Op::GlobalMaxPool:
    case Op::TopRMean: {
      Tensor& gx = grad_of(0);
      if (node.op == Op::TopRMean) {
        const double share = g[0] / static_cast<double>(node.argmax.size());
        for (auto idx : node.argmax) gx[idx] += share;
      } else {
        for (std::size_t o = 0; o < node.argmax.size(); ++o) gx[node.argmax[o]] += g[o];
      }
      return;
    }

    case Op::Mul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      Tensor& ga = grad_of(0);
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * b[i];
      Tensor& gb = grad_of(1);
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * a[i];
      return;
    }
    case Op::Add:
    case Op::Sub: {
      add_into(grad_of(0), g);
      Tensor& gb = grad_of(1);
      const double sign = node.op == Op::Add ? 1.0 : -1.0;
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += sign * g[i];
      return;
    }
    case Op::Scale: {
      Tensor& gx = grad_of(0);
      for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * node.scalar;
      return;
    }
    case Op::AddScalar:
      add_into(grad_of(0), g);
      return;

    case Op::Concat: {
      const auto s = split_at(y.shape(), node.index);
      std::size_t offset = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        Tensor& gp = grad_of(k);
        const std::size_t len = in(k).dim(node.index) * s.inner;
        for (std::size_t o = 0; o < s.outer; ++o) {
          const double* src = g.data() + o * s.length * s.inner + offset;
          double* dst = gp.data() + o * len;
          for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
        }
        offset += len;
      }
      return;
    }

    case Op::Mean: {
      const Tensor& x = in(0);
      Shape out_shape;
      const auto map = reduction_map(x.shape(), node.axes, out_shape);
      const double count = static_cast<double>(x.numel()) / static_cast<double>(y.numel());
      Tensor& gx = grad_of(0);
      for (std::size_t i = 0; i < x.numel(); ++i) gx[i] += g[map[i]] / count;
      return;
    }

    case Op::Sum: {
      Tensor& gx = grad_of(0);
      for (auto& v : gx.values()) v += g[0];
      return;
    }
    case Op::AbsSum: {
      Tensor& gx = grad_of(0);
      const Tensor& x = in(0);
      for (std::size_t i = 0; i < x.numel(); ++i) {
        gx[i] += x[i] > 0.0 ? g[0] : (x[i] < 0.0 ? -g[0] : 0.0);
      }
      return;
    }

    case Op::Reshape:
      add_into(grad_of(0), g);
      return;

    case Op::Select: {
      Tensor& gx = grad_of(0);
      const std::size_t block = g.numel();
      for (std::size_t i = 0; i < block; ++i) gx[node.index * block + i] += g[i];
      return;
    }

    case Op::Log: {
      Tensor& gx = grad_of(0);
      const Tensor& x = in(0);
      for (std::size_t i = 0; i < x.numel(); ++i) {
        if (x[i] > node.lo && x[i] < node.hi) gx[i] += g[i] / x[i];
      }
      return;
    }
  }
}

}  // namespace prognosis
