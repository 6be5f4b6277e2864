#include "nnsb/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include <Eigen/Core>

#include "nnsb/error.hpp"

namespace nnsb {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.values().data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

MutMap as_matrix(Tensor& t) {
  return MutMap(t.values().data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

Tape& same_tape(Var a, Var b) {
  require(a.valid() && b.valid(), "operation on an unbound Var");
  require(&a.tape() == &b.tape(), "operands recorded on different tapes");
  return a.tape();
}

void require_same_shape(Var a, Var b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch");
}

// Elementwise unary op: f(x) forward, df(x, y) derivative given input and output.
template <class F, class DF>
Var unary(Var a, F f, DF df) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const NodeId in = a.id();
  Tape& tape = a.tape();
  NodeId out_id = static_cast<NodeId>(tape.size());
  return tape.record(std::move(y), {in},
                     [in, out_id, df](const Tape& t, const Tensor& g, std::span<Tensor* const> grads) {
                       const Tensor& xv = t.value(in);
                       const Tensor& yv = t.value(out_id);
                       Tensor& gx = *grads[0];
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xv[i], yv[i]);
                     });
}

}  // namespace

// ---------------------------------------------------------------------------
// Tape

const Tensor& GradientMap::at(NodeId id) const {
  if (!contains(id)) {
    throw ContractViolation("no gradient recorded for node " + std::to_string(id));
  }
  return *grads_[id];
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, false, true});
  return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, true, true});
  return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

Var Tape::record(Tensor value, std::vector<NodeId> inputs, BackwardFn backward) {
  bool needs = false;
  for (NodeId in : inputs) {
    require(in < nodes_.size(), "Tape::record: unknown input node");
    needs = needs || nodes_[in].requires_grad;
  }
  if (!needs) {
    inputs.clear();
    backward = nullptr;
  }
  nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(backward), needs, false});
  return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

GradientMap Tape::backward(Var root) const {
  require(root.valid() && &root.tape() == this, "Tape::backward: root from another tape");
  const Shape& rs = nodes_[root.id()].value.shape();
  require(rs.rows == 1 && rs.cols == 1, "Tape::backward: root must be a scalar");

  std::vector<std::optional<Tensor>> grads(nodes_.size());
  if (nodes_[root.id()].requires_grad) grads[root.id()] = Tensor::scalar(1.0);

  std::vector<Tensor*> slots;
  for (std::size_t k = root.id() + 1; k-- > 0;) {
    const Node& node = nodes_[k];
    if (!grads[k] || node.is_leaf) continue;
    slots.assign(node.inputs.size(), nullptr);
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      const NodeId in = node.inputs[i];
      if (!nodes_[in].requires_grad) continue;
      if (!grads[in]) grads[in] = Tensor(nodes_[in].value.shape());
      slots[i] = &*grads[in];
    }
    node.backward(*this, *grads[k], slots);
    grads[k].reset();
  }

  GradientMap out;
  out.grads_ = std::move(grads);
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise binary

Var add(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_same_shape(a, b, "add");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return tape.record(std::move(y), {a.id(), b.id()},
                     [](const Tape&, const Tensor& g, std::span<Tensor* const> grads) {
                       for (Tensor* gi : grads) {
                         if (!gi) continue;
                         for (std::size_t i = 0; i < g.size(); ++i) (*gi)[i] += g[i];
                       }
                     });
}

Var sub(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_same_shape(a, b, "sub");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return tape.record(std::move(y), {a.id(), b.id()},
                     [](const Tape&, const Tensor& g, std::span<Tensor* const> grads) {
                       if (grads[0])
                         for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i];
                       if (grads[1])
                         for (std::size_t i = 0; i < g.size(); ++i) (*grads[1])[i] -= g[i];
                     });
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_same_shape(a, b, "mul");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  const NodeId ia = a.id(), ib = b.id();
  return tape.record(std::move(y), {ia, ib},
                     [ia, ib](const Tape& t, const Tensor& g, std::span<Tensor* const> grads) {
                       const Tensor& av = t.value(ia);
                       const Tensor& bv2 = t.value(ib);
                       if (grads[0])
                         for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i] * bv2[i];
                       if (grads[1])
                         for (std::size_t i = 0; i < g.size(); ++i) (*grads[1])[i] += g[i] * av[i];
                     });
}

Var div(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_same_shape(a, b, "div");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (bv[i] == 0.0) throw DomainError("div: zero denominator", b.id());
    y[i] /= bv[i];
  }
  const NodeId ia = a.id(), ib = b.id();
  return tape.record(std::move(y), {ia, ib},
                     [ia, ib](const Tape& t, const Tensor& g, std::span<Tensor* const> grads) {
                       const Tensor& av = t.value(ia);
                       const Tensor& bv2 = t.value(ib);
                       if (grads[0])
                         for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i] / bv2[i];
                       if (grads[1])
                         for (std::size_t i = 0; i < g.size(); ++i)
                           (*grads[1])[i] -= g[i] * av[i] / (bv2[i] * bv2[i]);
                     });
}

Var scale(Var a, double factor) {
  Tensor y = a.value();
  for (double& v : y.values()) v *= factor;
  return a.tape().record(std::move(y), {a.id()},
                         [factor](const Tape&, const Tensor& g, std::span<Tensor* const> grads) {
                           for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i] * factor;
                         });
}

Var add_scalar(Var a, double c) {
  Tensor y = a.value();
  for (double& v : y.values()) v += c;
  return a.tape().record(std::move(y), {a.id()},
                         [](const Tape&, const Tensor& g, std::span<Tensor* const> grads) {
                           for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i];
                         });
}

// ---------------------------------------------------------------------------
// Linear algebra

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require(a.shape().cols == b.shape().rows, "matmul: inner dimensions differ");
  Tensor y({a.shape().rows, b.shape().cols});
  as_matrix(y).noalias() = as_matrix(a.value()) * as_matrix(b.value());
  const NodeId ia = a.id(), ib = b.id();
  return tape.record(std::move(y), {ia, ib},
                     [ia, ib](const Tape& t, const Tensor& g, std::span<Tensor* const> grads) {
                       const auto gm = as_matrix(g);
                       if (grads[0]) as_matrix(*grads[0]).noalias() += gm * as_matrix(t.value(ib)).transpose();
                       if (grads[1]) as_matrix(*grads[1]).noalias() += as_matrix(t.value(ia)).transpose() * gm;
                     });
}

Var affine(Var x, Var weight, Var bias) {
  Tape& tape = same_tape(x, weight);
  same_tape(x, bias);
  const Shape xs = x.shape(), ws = weight.shape(), bs = bias.shape();
  require(xs.cols == ws.cols, "affine: input width does not match weight columns");
  require(bs.rows == 1 && bs.cols == ws.rows, "affine: bias must be 1 x out");
  Tensor y({xs.rows, ws.rows});
  auto ym = as_matrix(y);
  ym.noalias() = as_matrix(x.value()) * as_matrix(weight.value()).transpose();
  ym.rowwise() += as_matrix(bias.value()).row(0);
  const NodeId ix = x.id(), iw = weight.id();
  return tape.record(std::move(y), {ix, iw, bias.id()},
                     [ix, iw](const Tape& t, const Tensor& g, std::span<Tensor* const> grads) {
                       const auto gm = as_matrix(g);
                       if (grads[0]) as_matrix(*grads[0]).noalias() += gm * as_matrix(t.value(iw));
                       if (grads[1]) as_matrix(*grads[1]).noalias() += gm.transpose() * as_matrix(t.value(ix));
                       if (grads[2]) as_matrix(*grads[2]).row(0) += gm.colwise().sum();
                     });
}

// ---------------------------------------------------------------------------
// Elementwise unary

Var tanh(Var a) {
  return unary(a, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary(a, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var log(Var a) {
  for (double v : a.value().values()) {
    if (!(v > 0.0)) throw DomainError("log of non-positive value", a.id());
  }
  return unary(a, [](double v) { return std::log(v); }, [](double x, double) { return 1.0 / x; });
}

Var exp(Var a) {
  return unary(a, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var square(Var a) {
  return unary(a, [](double v) { return v * v; }, [](double x, double) { return 2.0 * x; });
}

Var abs(Var a) {
  return unary(a, [](double v) { return std::abs(v); },
               [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var clamp_min(Var a, double floor) {
  return unary(a, [floor](double v) { return v > floor ? v : floor; },
               [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Reductions and indexing

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.tape().record(Tensor::scalar(s), {a.id()},
                         [](const Tape&, const Tensor& g, std::span<Tensor* const> grads) {
                           const double gv = g[0];
                           for (double& v : grads[0]->values()) v += gv;
                         });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  require(n > 0, "mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var row_sum(Var a) {
  const Tensor& x = a.value();
  Tensor y({x.rows(), 1});
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = 0.0;
    for (double v : x.row_span(r)) s += v;
    y[r] = s;
  }
  return a.tape().record(std::move(y), {a.id()},
                         [](const Tape&, const Tensor& g, std::span<Tensor* const> grads) {
                           Tensor& gx = *grads[0];
                           for (std::size_t r = 0; r < gx.rows(); ++r)
                             for (double& v : gx.row_span(r)) v += g[r];
                         });
}

Var gather_rows(Var a, std::vector<std::size_t> index) {
  const Tensor& x = a.value();
  Tensor y = x.select_rows(index);
  return a.tape().record(std::move(y), {a.id()},
                         [index = std::move(index)](const Tape&, const Tensor& g,
                                                    std::span<Tensor* const> grads) {
                           Tensor& gx = *grads[0];
                           const std::size_t cols = gx.cols();
                           for (std::size_t i = 0; i < index.size(); ++i) {
                             auto dst = gx.row_span(index[i]);
                             auto src = g.row_span(i);
                             for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
                           }
                         });
}

Var segment_sum(Var a, std::vector<std::size_t> segment, std::size_t segments) {
  const Tensor& x = a.value();
  require(segment.size() == x.rows(), "segment_sum: one segment id per row required");
  Tensor y({segments, x.cols()});
  for (std::size_t i = 0; i < segment.size(); ++i) {
    require(segment[i] < segments, "segment_sum: segment id out of range");
    auto dst = y.row_span(segment[i]);
    auto src = x.row_span(i);
    for (std::size_t c = 0; c < x.cols(); ++c) dst[c] += src[c];
  }
  return a.tape().record(std::move(y), {a.id()},
                         [segment = std::move(segment)](const Tape&, const Tensor& g,
                                                        std::span<Tensor* const> grads) {
                           Tensor& gx = *grads[0];
                           for (std::size_t i = 0; i < segment.size(); ++i) {
                             auto dst = gx.row_span(i);
                             auto src = g.row_span(segment[i]);
                             for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
                           }
                         });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  require(begin < end && end <= x.cols(), "slice_cols: bad column range");
  const std::size_t w = end - begin;
  Tensor y({x.rows(), w});
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < w; ++c) y(r, c) = x(r, begin + c);
  return a.tape().record(std::move(y), {a.id()},
                         [begin, w](const Tape&, const Tensor& g, std::span<Tensor* const> grads) {
                           Tensor& gx = *grads[0];
                           for (std::size_t r = 0; r < g.rows(); ++r)
                             for (std::size_t c = 0; c < w; ++c) gx(r, begin + c) += g(r, c);
                         });
}

Var pairwise_sq_dist(Var a) {
  const Tensor& x = a.value();
  const std::size_t n = x.rows(), d = x.cols();
  Tensor y({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = x(i, k) - x(j, k);
        s += diff * diff;
      }
      y(i, j) = s;
    }
  }
  const NodeId ia = a.id();
  return a.tape().record(std::move(y), {ia},
                         [ia](const Tape& t, const Tensor& g, std::span<Tensor* const> grads) {
                           const Tensor& xv = t.value(ia);
                           Tensor& gx = *grads[0];
                           const std::size_t n2 = xv.rows(), d2 = xv.cols();
                           for (std::size_t i = 0; i < n2; ++i) {
                             for (std::size_t j = 0; j < n2; ++j) {
                               const double w = 2.0 * (g(i, j) + g(j, i));
                               for (std::size_t k = 0; k < d2; ++k) gx(i, k) += w * (xv(i, k) - xv(j, k));
                             }
                           }
                         });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  const std::size_t n = z.rows(), c = z.cols();
  require(labels.size() == n, "softmax_cross_entropy: one label per row required");
  Tensor prob({n, c});
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    require(labels[r] >= 0 && static_cast<std::size_t>(labels[r]) < c,
            "softmax_cross_entropy: label out of range");
    const auto row = z.row_span(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double denom = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      prob(r, k) = std::exp(row[k] - mx);
      denom += prob(r, k);
    }
    for (std::size_t k = 0; k < c; ++k) prob(r, k) /= denom;
    loss -= (row[labels[r]] - mx) - std::log(denom);
  }
  loss /= static_cast<double>(n);
  std::vector<int> lab(labels.begin(), labels.end());
  return logits.tape().record(
      Tensor::scalar(loss), {logits.id()},
      [prob = std::move(prob), lab = std::move(lab)](const Tape&, const Tensor& g,
                                                     std::span<Tensor* const> grads) {
        Tensor& gz = *grads[0];
        const double s = g[0] / static_cast<double>(prob.rows());
        for (std::size_t r = 0; r < prob.rows(); ++r) {
          for (std::size_t k = 0; k < prob.cols(); ++k) {
            const double target = static_cast<int>(k) == lab[r] ? 1.0 : 0.0;
            gz(r, k) += s * (prob(r, k) - target);
          }
        }
      });
}

}  // namespace nnsb
