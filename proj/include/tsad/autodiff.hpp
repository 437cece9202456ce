#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "tsad/errors.hpp"
#include "tsad/matrix.hpp"

namespace tsad {

using NodeId = std::size_t;

enum class Op {
  leaf,
  add,
  matmul,
  conv1d,
  scale,
  softmax_rows,
  concat,
  slice_cols,
  log_clamped,
  mul,
  sum,
  stop_gradient,
  repeat_tile,
  repeat_interleave,
};

// Reverse-mode tape over dense matrices. Nodes are appended to an arena, so
// ascending ids are already a topological order; forward() recomputes in id
// order and backward() sweeps in reverse. Gradients accumulate across
// backward() calls until zero_grad().
template <typename S>
class Graph {
 public:
  struct Node {
    Op op = Op::leaf;
    Matrix<S> value;
    Matrix<S> grad;
    std::vector<NodeId> parents;
    S factor = S(1);       // scale
    S eps = S(0);          // log_clamped
    bool trans_a = false;  // matmul
    bool trans_b = false;
    std::size_t axis = 0;    // concat: 0 rows, 1 cols
    std::size_t repeat = 1;  // repeat_tile / repeat_interleave
    std::size_t col_begin = 0, col_end = 0;  // slice_cols
  };

  NodeId leaf(Matrix<S> v) {
    Node n;
    n.op = Op::leaf;
    n.value = std::move(v);
    return push(std::move(n));
  }

  NodeId add(std::vector<NodeId> xs) {
    if (xs.empty()) throw std::invalid_argument("add needs at least one input");
    for (NodeId id : xs)
      if (!at(xs[0]).value.same_shape(at(id).value))
        throw std::invalid_argument("add inputs must share a shape");
    Node n;
    n.op = Op::add;
    n.parents = std::move(xs);
    n.value = Matrix<S>(at(n.parents[0]).value.rows, at(n.parents[0]).value.cols);
    return push(std::move(n));
  }

  NodeId matmul(NodeId a, NodeId b, bool trans_a = false, bool trans_b = false) {
    const auto& A = at(a).value;
    const auto& B = at(b).value;
    std::size_t ar = trans_a ? A.cols : A.rows;
    std::size_t ac = trans_a ? A.rows : A.cols;
    std::size_t br = trans_b ? B.cols : B.rows;
    std::size_t bc = trans_b ? B.rows : B.cols;
    if (ac != br) throw std::invalid_argument("matmul inner dimensions differ");
    Node n;
    n.op = Op::matmul;
    n.parents = {a, b};
    n.trans_a = trans_a;
    n.trans_b = trans_b;
    n.value = Matrix<S>(ar, bc);
    return push(std::move(n));
  }

  // input T x F, kernel (3F) x M stacked by tap (offsets -1, 0, +1), circular
  // over the token axis.
  NodeId conv1d_circular(NodeId input, NodeId kernel) {
    const auto& I = at(input).value;
    const auto& K = at(kernel).value;
    if (K.rows != 3 * I.cols) throw std::invalid_argument("conv kernel rows must be 3*features");
    Node n;
    n.op = Op::conv1d;
    n.parents = {input, kernel};
    n.value = Matrix<S>(I.rows, K.cols);
    return push(std::move(n));
  }

  NodeId scale(NodeId a, S factor) {
    Node n;
    n.op = Op::scale;
    n.parents = {a};
    n.factor = factor;
    n.value = Matrix<S>(at(a).value.rows, at(a).value.cols);
    return push(std::move(n));
  }

  NodeId softmax_rows(NodeId a) {
    Node n;
    n.op = Op::softmax_rows;
    n.parents = {a};
    n.value = Matrix<S>(at(a).value.rows, at(a).value.cols);
    return push(std::move(n));
  }

  NodeId concat(NodeId a, NodeId b, std::size_t axis) {
    const auto& A = at(a).value;
    const auto& B = at(b).value;
    if (axis > 1) throw std::invalid_argument("concat axis must be 0 or 1");
    Node n;
    n.op = Op::concat;
    n.parents = {a, b};
    n.axis = axis;
    if (axis == 0) {
      if (A.cols != B.cols) throw std::invalid_argument("concat rows: column counts differ");
      n.value = Matrix<S>(A.rows + B.rows, A.cols);
    } else {
      if (A.rows != B.rows) throw std::invalid_argument("concat cols: row counts differ");
      n.value = Matrix<S>(A.rows, A.cols + B.cols);
    }
    return push(std::move(n));
  }

  NodeId slice_cols(NodeId a, std::size_t col_begin, std::size_t col_end) {
    const auto& A = at(a).value;
    if (col_begin >= col_end || col_end > A.cols)
      throw std::invalid_argument("slice_cols range out of bounds");
    Node n;
    n.op = Op::slice_cols;
    n.parents = {a};
    n.col_begin = col_begin;
    n.col_end = col_end;
    n.value = Matrix<S>(A.rows, col_end - col_begin);
    return push(std::move(n));
  }

  // log(max(x, eps)); gradient is 1/x above the clamp and exactly 0 below it.
  NodeId log_clamped(NodeId a, S eps) {
    Node n;
    n.op = Op::log_clamped;
    n.parents = {a};
    n.eps = eps;
    n.value = Matrix<S>(at(a).value.rows, at(a).value.cols);
    return push(std::move(n));
  }

  NodeId mul(NodeId a, NodeId b) {
    if (!at(a).value.same_shape(at(b).value))
      throw std::invalid_argument("mul inputs must share a shape");
    Node n;
    n.op = Op::mul;
    n.parents = {a, b};
    n.value = Matrix<S>(at(a).value.rows, at(a).value.cols);
    return push(std::move(n));
  }

  NodeId sum(NodeId a) {
    Node n;
    n.op = Op::sum;
    n.parents = {a};
    n.value = Matrix<S>(1, 1);
    return push(std::move(n));
  }

  NodeId stop_gradient(NodeId a) {
    Node n;
    n.op = Op::stop_gradient;
    n.parents = {a};
    n.value = Matrix<S>(at(a).value.rows, at(a).value.cols);
    return push(std::move(n));
  }

  NodeId repeat_tile(NodeId a, std::size_t times) {
    if (times == 0) throw std::invalid_argument("repeat_tile needs times >= 1");
    Node n;
    n.op = Op::repeat_tile;
    n.parents = {a};
    n.repeat = times;
    n.value = Matrix<S>(at(a).value.rows * times, at(a).value.cols * times);
    return push(std::move(n));
  }

  NodeId repeat_interleave(NodeId a, std::size_t times) {
    if (times == 0) throw std::invalid_argument("repeat_interleave needs times >= 1");
    Node n;
    n.op = Op::repeat_interleave;
    n.parents = {a};
    n.repeat = times;
    n.value = Matrix<S>(at(a).value.rows * times, at(a).value.cols * times);
    return push(std::move(n));
  }

  std::size_t node_count() const { return nodes_.size(); }
  Op op_of(NodeId id) const { return at(id).op; }

  Matrix<S>& value(NodeId id) { return nodes_[id].value; }
  const Matrix<S>& value(NodeId id) const { return nodes_[id].value; }

  const Matrix<S>& gradient(NodeId id) const {
    if (nodes_[id].grad.empty())
      const_cast<Node&>(nodes_[id]).grad = Matrix<S>(nodes_[id].value.rows, nodes_[id].value.cols);
    return nodes_[id].grad;
  }

  void forward() {
    for (Node& n : nodes_) compute(n);
  }

  void zero_grad() {
    for (Node& n : nodes_)
      if (!n.grad.empty()) n.grad.fill(S(0));
  }

  void backward(NodeId root) {
    const Node& r = at(root);
    if (r.value.rows != 1 || r.value.cols != 1)
      throw std::invalid_argument("backward needs a scalar root");
    std::vector<Matrix<S>> up(nodes_.size());
    up[root] = Matrix<S>(1, 1);
    up[root](0, 0) = S(1);
    for (std::size_t idx = root + 1; idx-- > 0;) {
      if (up[idx].empty()) continue;
      propagate(idx, up);
      Node& n = nodes_[idx];
      if (n.grad.empty()) n.grad = Matrix<S>(n.value.rows, n.value.cols);
      for (std::size_t i = 0; i < n.grad.data.size(); ++i) n.grad.data[i] += up[idx].data[i];
    }
  }

  // True when some path from leaf up to root avoids every stop_gradient node.
  bool differentiably_reaches(NodeId leaf, NodeId root) const {
    std::vector<char> seen(nodes_.size(), 0);
    std::vector<NodeId> stack{root};
    while (!stack.empty()) {
      NodeId id = stack.back();
      stack.pop_back();
      if (seen[id]) continue;
      seen[id] = 1;
      if (id == leaf) return true;
      const Node& n = nodes_[id];
      if (n.op == Op::stop_gradient) continue;
      for (NodeId p : n.parents) stack.push_back(p);
    }
    return false;
  }

 private:
  std::vector<Node> nodes_;

  NodeId push(Node n) {
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  Node& at(NodeId id) { return nodes_.at(id); }
  const Node& at(NodeId id) const { return nodes_.at(id); }

  static void matmul_into(Matrix<S>& out, const Matrix<S>& A, bool ta, const Matrix<S>& B,
                          bool tb, bool accumulate) {
    std::size_t rows = ta ? A.cols : A.rows;
    std::size_t inner = ta ? A.rows : A.cols;
    std::size_t cols = tb ? B.rows : B.cols;
    if (!accumulate) {
      out = Matrix<S>(rows, cols);
    }
    for (std::size_t i = 0; i < rows; ++i) {
      S* o = out.row(i);
      for (std::size_t k = 0; k < inner; ++k) {
        S a = ta ? A(k, i) : A(i, k);
        if (!tb) {
          const S* b = B.row(k);
          for (std::size_t j = 0; j < cols; ++j) o[j] += a * b[j];
        } else {
          for (std::size_t j = 0; j < cols; ++j) o[j] += a * B(j, k);
        }
      }
    }
  }

  void compute(Node& n) {
    switch (n.op) {
      case Op::leaf:
        break;
      case Op::add: {
        n.value.fill(S(0));
        for (NodeId p : n.parents) {
          const auto& src = nodes_[p].value;
          for (std::size_t i = 0; i < src.data.size(); ++i) n.value.data[i] += src.data[i];
        }
        break;
      }
      case Op::matmul:
        matmul_into(n.value, nodes_[n.parents[0]].value, n.trans_a, nodes_[n.parents[1]].value,
                    n.trans_b, false);
        break;
      case Op::conv1d: {
        const auto& I = nodes_[n.parents[0]].value;
        const auto& K = nodes_[n.parents[1]].value;
        std::size_t T = I.rows, F = I.cols, M = K.cols;
        n.value.fill(S(0));
        for (std::size_t t = 0; t < T; ++t) {
          S* o = n.value.row(t);
          for (std::size_t k = 0; k < 3; ++k) {
            const S* in = I.row((t + k + T - 1) % T);
            for (std::size_t f = 0; f < F; ++f) {
              S c = in[f];
              const S* kr = K.row(k * F + f);
              for (std::size_t m = 0; m < M; ++m) o[m] += c * kr[m];
            }
          }
        }
        break;
      }
      case Op::scale: {
        const auto& src = nodes_[n.parents[0]].value;
        for (std::size_t i = 0; i < src.data.size(); ++i) n.value.data[i] = n.factor * src.data[i];
        break;
      }
      case Op::softmax_rows: {
        const auto& src = nodes_[n.parents[0]].value;
        for (std::size_t i = 0; i < src.rows; ++i) {
          const S* x = src.row(i);
          S* y = n.value.row(i);
          S mx = x[0];
          for (std::size_t j = 1; j < src.cols; ++j) mx = std::max(mx, x[j]);
          S total = S(0);
          for (std::size_t j = 0; j < src.cols; ++j) {
            y[j] = std::exp(x[j] - mx);
            total += y[j];
          }
          for (std::size_t j = 0; j < src.cols; ++j) y[j] /= total;
        }
        break;
      }
      case Op::concat: {
        const auto& A = nodes_[n.parents[0]].value;
        const auto& B = nodes_[n.parents[1]].value;
        if (n.axis == 0) {
          std::copy(A.data.begin(), A.data.end(), n.value.data.begin());
          std::copy(B.data.begin(), B.data.end(), n.value.data.begin() + A.data.size());
        } else {
          for (std::size_t i = 0; i < A.rows; ++i) {
            std::copy(A.row(i), A.row(i) + A.cols, n.value.row(i));
            std::copy(B.row(i), B.row(i) + B.cols, n.value.row(i) + A.cols);
          }
        }
        break;
      }
      case Op::slice_cols: {
        const auto& A = nodes_[n.parents[0]].value;
        for (std::size_t i = 0; i < A.rows; ++i)
          std::copy(A.row(i) + n.col_begin, A.row(i) + n.col_end, n.value.row(i));
        break;
      }
      case Op::log_clamped: {
        const auto& src = nodes_[n.parents[0]].value;
        for (std::size_t i = 0; i < src.data.size(); ++i)
          n.value.data[i] = std::log(std::max(src.data[i], n.eps));
        break;
      }
      case Op::mul: {
        const auto& A = nodes_[n.parents[0]].value;
        const auto& B = nodes_[n.parents[1]].value;
        for (std::size_t i = 0; i < A.data.size(); ++i) n.value.data[i] = A.data[i] * B.data[i];
        break;
      }
      case Op::sum: {
        const auto& src = nodes_[n.parents[0]].value;
        S total = S(0);
        for (S v : src.data) total += v;
        n.value(0, 0) = total;
        break;
      }
      case Op::stop_gradient:
        n.value = nodes_[n.parents[0]].value;
        break;
      case Op::repeat_tile: {
        const auto& A = nodes_[n.parents[0]].value;
        for (std::size_t i = 0; i < n.value.rows; ++i) {
          const S* src = A.row(i % A.rows);
          S* dst = n.value.row(i);
          for (std::size_t j = 0; j < n.value.cols; ++j) dst[j] = src[j % A.cols];
        }
        break;
      }
      case Op::repeat_interleave: {
        const auto& A = nodes_[n.parents[0]].value;
        for (std::size_t i = 0; i < n.value.rows; ++i) {
          const S* src = A.row(i / n.repeat);
          S* dst = n.value.row(i);
          for (std::size_t j = 0; j < n.value.cols; ++j) dst[j] = src[j / n.repeat];
        }
        break;
      }
    }
  }

  static Matrix<S>& touch(std::vector<Matrix<S>>& up, NodeId id, const Matrix<S>& like) {
    if (up[id].empty()) up[id] = Matrix<S>(like.rows, like.cols);
    return up[id];
  }

  void propagate(NodeId idx, std::vector<Matrix<S>>& up) {
    Node& n = nodes_[idx];
    const Matrix<S>& g = up[idx];
    switch (n.op) {
      case Op::leaf:
        break;
      case Op::add: {
        for (NodeId p : n.parents) {
          auto& dst = touch(up, p, nodes_[p].value);
          for (std::size_t i = 0; i < g.data.size(); ++i) dst.data[i] += g.data[i];
        }
        break;
      }
      case Op::matmul: {
        const auto& A = nodes_[n.parents[0]].value;
        const auto& B = nodes_[n.parents[1]].value;
        auto& dA = touch(up, n.parents[0], A);
        auto& dB = touch(up, n.parents[1], B);
        if (!n.trans_a && !n.trans_b) {
          matmul_into(dA, g, false, B, true, true);
          matmul_into(dB, A, true, g, false, true);
        } else if (!n.trans_a && n.trans_b) {
          matmul_into(dA, g, false, B, false, true);
          matmul_into(dB, g, true, A, false, true);
        } else if (n.trans_a && !n.trans_b) {
          matmul_into(dA, B, false, g, true, true);
          matmul_into(dB, A, false, g, false, true);
        } else {
          // C = A'B', dA = (gB)', dB = (Ag)'
          Matrix<S> tmp;
          matmul_into(tmp, g, false, B, false, false);
          for (std::size_t i = 0; i < dA.rows; ++i)
            for (std::size_t j = 0; j < dA.cols; ++j) dA(i, j) += tmp(j, i);
          matmul_into(tmp, A, false, g, false, false);
          for (std::size_t i = 0; i < dB.rows; ++i)
            for (std::size_t j = 0; j < dB.cols; ++j) dB(i, j) += tmp(j, i);
        }
        break;
      }
      case Op::conv1d: {
        const auto& I = nodes_[n.parents[0]].value;
        const auto& K = nodes_[n.parents[1]].value;
        auto& dI = touch(up, n.parents[0], I);
        auto& dK = touch(up, n.parents[1], K);
        std::size_t T = I.rows, F = I.cols, M = K.cols;
        for (std::size_t t = 0; t < T; ++t) {
          const S* go = g.row(t);
          for (std::size_t k = 0; k < 3; ++k) {
            std::size_t src = (t + k + T - 1) % T;
            const S* in = I.row(src);
            S* di = dI.row(src);
            for (std::size_t f = 0; f < F; ++f) {
              const S* kr = K.row(k * F + f);
              S* dk = dK.row(k * F + f);
              S acc = S(0);
              S c = in[f];
              for (std::size_t m = 0; m < M; ++m) {
                acc += go[m] * kr[m];
                dk[m] += go[m] * c;
              }
              di[f] += acc;
            }
          }
        }
        break;
      }
      case Op::scale: {
        auto& dst = touch(up, n.parents[0], nodes_[n.parents[0]].value);
        for (std::size_t i = 0; i < g.data.size(); ++i) dst.data[i] += n.factor * g.data[i];
        break;
      }
      case Op::softmax_rows: {
        auto& dst = touch(up, n.parents[0], nodes_[n.parents[0]].value);
        for (std::size_t i = 0; i < g.rows; ++i) {
          const S* y = n.value.row(i);
          const S* go = g.row(i);
          S dot = S(0);
          for (std::size_t j = 0; j < g.cols; ++j) dot += go[j] * y[j];
          S* d = dst.row(i);
          for (std::size_t j = 0; j < g.cols; ++j) d[j] += y[j] * (go[j] - dot);
        }
        break;
      }
      case Op::concat: {
        const auto& A = nodes_[n.parents[0]].value;
        const auto& B = nodes_[n.parents[1]].value;
        auto& dA = touch(up, n.parents[0], A);
        auto& dB = touch(up, n.parents[1], B);
        if (n.axis == 0) {
          for (std::size_t i = 0; i < A.data.size(); ++i) dA.data[i] += g.data[i];
          for (std::size_t i = 0; i < B.data.size(); ++i) dB.data[i] += g.data[A.data.size() + i];
        } else {
          for (std::size_t i = 0; i < A.rows; ++i) {
            const S* go = g.row(i);
            S* da = dA.row(i);
            S* db = dB.row(i);
            for (std::size_t j = 0; j < A.cols; ++j) da[j] += go[j];
            for (std::size_t j = 0; j < B.cols; ++j) db[j] += go[A.cols + j];
          }
        }
        break;
      }
      case Op::slice_cols: {
        auto& dst = touch(up, n.parents[0], nodes_[n.parents[0]].value);
        for (std::size_t i = 0; i < g.rows; ++i) {
          const S* go = g.row(i);
          S* d = dst.row(i) + n.col_begin;
          for (std::size_t j = 0; j < g.cols; ++j) d[j] += go[j];
        }
        break;
      }
      case Op::log_clamped: {
        const auto& x = nodes_[n.parents[0]].value;
        auto& dst = touch(up, n.parents[0], x);
        for (std::size_t i = 0; i < g.data.size(); ++i)
          if (x.data[i] > n.eps) dst.data[i] += g.data[i] / x.data[i];
        break;
      }
      case Op::mul: {
        const auto& A = nodes_[n.parents[0]].value;
        const auto& B = nodes_[n.parents[1]].value;
        auto& dA = touch(up, n.parents[0], A);
        auto& dB = touch(up, n.parents[1], B);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          dA.data[i] += g.data[i] * B.data[i];
          dB.data[i] += g.data[i] * A.data[i];
        }
        break;
      }
      case Op::sum: {
        auto& dst = touch(up, n.parents[0], nodes_[n.parents[0]].value);
        S go = g(0, 0);
        for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += go;
        break;
      }
      case Op::stop_gradient:
        break;
      case Op::repeat_tile: {
        const auto& A = nodes_[n.parents[0]].value;
        auto& dst = touch(up, n.parents[0], A);
        for (std::size_t i = 0; i < g.rows; ++i) {
          const S* go = g.row(i);
          S* d = dst.row(i % A.rows);
          for (std::size_t j = 0; j < g.cols; ++j) d[j % A.cols] += go[j];
        }
        break;
      }
      case Op::repeat_interleave: {
        const auto& A = nodes_[n.parents[0]].value;
        auto& dst = touch(up, n.parents[0], A);
        for (std::size_t i = 0; i < g.rows; ++i) {
          const S* go = g.row(i);
          S* d = dst.row(i / n.repeat);
          for (std::size_t j = 0; j < g.cols; ++j) d[j / n.repeat] += go[j];
        }
        break;
      }
    }
  }
};

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  bool behind_stop = false;  // leaf only reaches the root through stop_gradient
};

// Central differences against the analytic gradient, entry by entry. The graph
// is restored to its original state afterwards.
template <typename S>
FiniteDiffReport finite_diff_check(Graph<S>& g, NodeId root, NodeId leaf, double step = 1e-5) {
  g.forward();
  g.zero_grad();
  g.backward(root);
  Matrix<S> analytic = g.gradient(leaf);

  FiniteDiffReport report;
  report.behind_stop = !g.differentiably_reaches(leaf, root);

  Matrix<S>& x = g.value(leaf);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    S orig = x.data[i];
    x.data[i] = orig + static_cast<S>(step);
    g.forward();
    double fp = static_cast<double>(g.value(root)(0, 0));
    x.data[i] = orig - static_cast<S>(step);
    g.forward();
    double fm = static_cast<double>(g.value(root)(0, 0));
    x.data[i] = orig;
    double numeric = (fp - fm) / (2.0 * step);
    double a = static_cast<double>(analytic.data[i]);
    double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
    report.max_rel_error = std::max(report.max_rel_error, rel);
  }
  g.forward();
  return report;
}

}  // namespace tsad
