#ifndef CONGEN_AUTOGRAD_HPP
#define CONGEN_AUTOGRAD_HPP

#include <cassert>
#include <functional>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

#include "congen/matrix.hpp"

namespace congen {

template <class S>
struct Param;

// Reverse-mode tape over dense Eigen matrices. Nodes are appended in
// topological order during the forward pass; backward() runs the recorded
// closures in reverse. A fresh tape is built per forward pass.
template <class S>
class Tape;

template <class S>
struct Var {
  Tape<S>* tape = nullptr;
  int id = -1;

  const Mat<S>& value() const { return tape->value(id); }
  int rows() const { return static_cast<int>(value().rows()); }
  int cols() const { return static_cast<int>(value().cols()); }
};

template <class S>
class Tape {
 public:
  struct Node {
    Mat<S> value;
    Mat<S> grad;
    std::vector<int> parents;
    std::function<void(Tape&, Node&)> backward;
    bool needs_grad = false;
  };

  // Dropout is active only while a training loop installs an rng here.
  Rng* dropout_rng = nullptr;
  double dropout_rate = 0.0;

  Var<S> make(Mat<S> value, std::vector<int> parents,
              std::function<void(Tape&, Node&)> backward, bool needs_grad) {
    for (int p : parents) {
      if (p < 0 || p >= static_cast<int>(nodes_.size())) {
        throw std::runtime_error("autograd: parent outside recorded graph (cycle?)");
      }
    }
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.backward = std::move(backward);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Var<S>{this, static_cast<int>(nodes_.size()) - 1};
  }

  Var<S> constant(Mat<S> value) {
    return make(std::move(value), {}, nullptr, false);
  }

  Var<S> leaf(Mat<S> value, bool needs_grad = true) {
    return make(std::move(value), {}, nullptr, needs_grad);
  }

  // Binds a stored parameter: forward uses a copy of its current value and
  // backward() accumulates into the parameter's grad buffer. Repeated binds
  // of one parameter share a node.
  Var<S> param(Param<S>& p) {
    auto it = binding_index_.find(&p);
    if (it != binding_index_.end()) return Var<S>{this, it->second};
    Var<S> v = leaf(p.value, true);
    bindings_.emplace_back(&p, v.id);
    binding_index_[&p] = v.id;
    return v;
  }

  const Mat<S>& value(int id) const { return nodes_[id].value; }
  const Mat<S>& grad(int id) const { return nodes_[id].grad; }

  // Reverse sweep from a scalar root. Gradients of unreached nodes stay
  // exactly zero.
  void backward(Var<S> root) {
    if (root.tape != this) throw std::runtime_error("autograd: root from another tape");
    Node& r = nodes_[root.id];
    if (r.value.rows() != 1 || r.value.cols() != 1) {
      throw std::runtime_error("autograd: backward root must be a scalar");
    }
    for (Node& n : nodes_) {
      n.grad = Mat<S>::Zero(n.value.rows(), n.value.cols());
    }
    r.grad(0, 0) = S(1);
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.backward && n.grad.cwiseAbs().sum() != S(0)) {
        n.backward(*this, n);
      }
    }
    for (auto& [p, id] : bindings_) {
      if (nodes_[id].grad.size() > 0) p->grad += nodes_[id].grad;
    }
  }

  Mat<S>& grad_ref(int id) { return nodes_[id].grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
  std::vector<std::pair<Param<S>*, int>> bindings_;
  std::unordered_map<Param<S>*, int> binding_index_;
};

namespace detail {

template <class S>
void check_same_tape(Var<S> a, Var<S> b) {
  if (a.tape != b.tape) throw std::runtime_error("autograd: vars from different tapes");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and structural ops
// ---------------------------------------------------------------------------

template <class S>
Var<S> add(Var<S> a, Var<S> b) {
  detail::check_same_tape(a, b);
  Tape<S>& t = *a.tape;
  int ai = a.id, bi = b.id;
  return t.make(a.value() + b.value(), {ai, bi},
                [ai, bi](Tape<S>& tp, typename Tape<S>::Node& n) {
                  tp.grad_ref(ai) += n.grad;
                  tp.grad_ref(bi) += n.grad;
                },
                true);
}

template <class S>
Var<S> sub(Var<S> a, Var<S> b) {
  detail::check_same_tape(a, b);
  Tape<S>& t = *a.tape;
  int ai = a.id, bi = b.id;
  return t.make(a.value() - b.value(), {ai, bi},
                [ai, bi](Tape<S>& tp, typename Tape<S>::Node& n) {
                  tp.grad_ref(ai) += n.grad;
                  tp.grad_ref(bi) -= n.grad;
                },
                true);
}

template <class S>
Var<S> mul(Var<S> a, Var<S> b) {
  detail::check_same_tape(a, b);
  Tape<S>& t = *a.tape;
  int ai = a.id, bi = b.id;
  return t.make(a.value().cwiseProduct(b.value()), {ai, bi},
                [ai, bi](Tape<S>& tp, typename Tape<S>::Node& n) {
                  tp.grad_ref(ai) += n.grad.cwiseProduct(tp.value(bi));
                  tp.grad_ref(bi) += n.grad.cwiseProduct(tp.value(ai));
                },
                true);
}

// y = alpha * a + beta (elementwise)
template <class S>
Var<S> affine(Var<S> a, S alpha, S beta) {
  Tape<S>& t = *a.tape;
  int ai = a.id;
  Mat<S> y = (a.value().array() * alpha + beta).matrix();
  return t.make(std::move(y), {ai},
                [ai, alpha](Tape<S>& tp, typename Tape<S>::Node& n) {
                  tp.grad_ref(ai) += alpha * n.grad;
                },
                true);
}

template <class S>
Var<S> scale(Var<S> a, S alpha) {
  return affine(a, alpha, S(0));
}

template <class S>
Var<S> matmul(Var<S> a, Var<S> b) {
  detail::check_same_tape(a, b);
  Tape<S>& t = *a.tape;
  int ai = a.id, bi = b.id;
  return t.make(a.value() * b.value(), {ai, bi},
                [ai, bi](Tape<S>& tp, typename Tape<S>::Node& n) {
                  tp.grad_ref(ai) += n.grad * tp.value(bi).transpose();
                  tp.grad_ref(bi) += tp.value(ai).transpose() * n.grad;
                },
                true);
}

template <class S>
Var<S> transpose(Var<S> a) {
  Tape<S>& t = *a.tape;
  int ai = a.id;
  return t.make(a.value().transpose(), {ai},
                [ai](Tape<S>& tp, typename Tape<S>::Node& n) {
                  tp.grad_ref(ai) += n.grad.transpose();
                },
                true);
}

// broadcast-add a 1 x d row vector to every row of x (n x d)
template <class S>
Var<S> add_rowvec(Var<S> x, Var<S> b) {
  detail::check_same_tape(x, b);
  Tape<S>& t = *x.tape;
  int xi = x.id, bi = b.id;
  Mat<S> y = x.value();
  y.rowwise() += b.value().row(0);
  return t.make(std::move(y), {xi, bi},
                [xi, bi](Tape<S>& tp, typename Tape<S>::Node& n) {
                  tp.grad_ref(xi) += n.grad;
                  tp.grad_ref(bi) += n.grad.colwise().sum();
                },
                true);
}

template <class S>
Var<S> slice_rows(Var<S> a, int r0, int nrows) {
  Tape<S>& t = *a.tape;
  int ai = a.id;
  return t.make(a.value().middleRows(r0, nrows), {ai},
                [ai, r0, nrows](Tape<S>& tp, typename Tape<S>::Node& n) {
                  tp.grad_ref(ai).middleRows(r0, nrows) += n.grad;
                },
                true);
}

template <class S>
Var<S> slice_cols(Var<S> a, int c0, int ncols) {
  Tape<S>& t = *a.tape;
  int ai = a.id;
  return t.make(a.value().middleCols(c0, ncols), {ai},
                [ai, c0, ncols](Tape<S>& tp, typename Tape<S>::Node& n) {
                  tp.grad_ref(ai).middleCols(c0, ncols) += n.grad;
                },
                true);
}

template <class S>
Var<S> row(Var<S> a, int r) {
  return slice_rows(a, r, 1);
}

template <class S>
Var<S> concat_rows(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw std::runtime_error("concat_rows: empty");
  Tape<S>& t = *parts.front().tape;
  int total = 0;
  const int cols = parts.front().cols();
  std::vector<int> ids;
  for (const auto& p : parts) {
    detail::check_same_tape(parts.front(), p);
    total += p.rows();
    ids.push_back(p.id);
  }
  Mat<S> y(total, cols);
  int r = 0;
  for (const auto& p : parts) {
    y.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return t.make(std::move(y), ids,
                [ids](Tape<S>& tp, typename Tape<S>::Node& n) {
                  int r0 = 0;
                  for (int id : ids) {
                    const int nr = static_cast<int>(tp.value(id).rows());
                    tp.grad_ref(id) += n.grad.middleRows(r0, nr);
                    r0 += nr;
                  }
                },
                true);
}

template <class S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw std::runtime_error("concat_cols: empty");
  Tape<S>& t = *parts.front().tape;
  int total = 0;
  const int rows = parts.front().rows();
  std::vector<int> ids;
  for (const auto& p : parts) {
    detail::check_same_tape(parts.front(), p);
    total += p.cols();
    ids.push_back(p.id);
  }
  Mat<S> y(rows, total);
  int c = 0;
  for (const auto& p : parts) {
    y.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return t.make(std::move(y), ids,
                [ids](Tape<S>& tp, typename Tape<S>::Node& n) {
                  int c0 = 0;
                  for (int id : ids) {
                    const int nc = static_cast<int>(tp.value(id).cols());
                    tp.grad_ref(id) += n.grad.middleCols(c0, nc);
                    c0 += nc;
                  }
                },
                true);
}

// rows of `table` gathered by index; backward scatter-adds into the table
template <class S>
Var<S> gather_rows(Var<S> table, const std::vector<int>& idx) {
  Tape<S>& t = *table.tape;
  int ti = table.id;
  Mat<S> y(static_cast<int>(idx.size()), table.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    y.row(static_cast<int>(i)) = table.value().row(idx[i]);
  }
  std::vector<int> idx_copy = idx;
  return t.make(std::move(y), {ti},
                [ti, idx_copy](Tape<S>& tp, typename Tape<S>::Node& n) {
                  for (std::size_t i = 0; i < idx_copy.size(); ++i) {
                    tp.grad_ref(ti).row(idx_copy[i]) += n.grad.row(static_cast<int>(i));
                  }
                },
                true);
}

// stop-gradient: value flows, gradient does not
template <class S>
Var<S> detach(Var<S> a) {
  return a.tape->constant(a.value());
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

template <class S>
Var<S> sigmoid(Var<S> a) {
  Tape<S>& t = *a.tape;
  int ai = a.id;
  Mat<S> y = (S(1) / (S(1) + (-a.value().array()).exp())).matrix();
  return t.make(std::move(y), {ai},
                [ai](Tape<S>& tp, typename Tape<S>::Node& n) {
                  const auto& y = n.value.array();
                  tp.grad_ref(ai) += (n.grad.array() * y * (S(1) - y)).matrix();
                },
                true);
}

template <class S>
Var<S> tanh_fn(Var<S> a) {
  Tape<S>& t = *a.tape;
  int ai = a.id;
  Mat<S> y = a.value().array().tanh().matrix();
  return t.make(std::move(y), {ai},
                [ai](Tape<S>& tp, typename Tape<S>::Node& n) {
                  const auto& y = n.value.array();
                  tp.grad_ref(ai) += (n.grad.array() * (S(1) - y * y)).matrix();
                },
                true);
}

template <class S>
Var<S> relu(Var<S> a) {
  Tape<S>& t = *a.tape;
  int ai = a.id;
  Mat<S> y = a.value().cwiseMax(S(0));
  return t.make(std::move(y), {ai},
                [ai](Tape<S>& tp, typename Tape<S>::Node& n) {
                  tp.grad_ref(ai) +=
                      (n.grad.array() * (tp.value(ai).array() > S(0)).template cast<S>()).matrix();
                },
                true);
}

template <class S>
Var<S> log_elem(Var<S> a) {
  Tape<S>& t = *a.tape;
  int ai = a.id;
  Mat<S> y = a.value().array().log().matrix();
  return t.make(std::move(y), {ai},
                [ai](Tape<S>& tp, typename Tape<S>::Node& n) {
                  tp.grad_ref(ai) += (n.grad.array() / tp.value(ai).array()).matrix();
                },
                true);
}

// ---------------------------------------------------------------------------
// Row-wise softmax family. `add_mask`, when given, is added to the logits
// before normalization (0 for visible, a large negative number for masked).
// ---------------------------------------------------------------------------

template <class S>
Var<S> softmax_rows(Var<S> a, const Mat<S>* add_mask = nullptr) {
  Tape<S>& t = *a.tape;
  int ai = a.id;
  Mat<S> z = a.value();
  if (add_mask) z += *add_mask;
  Mat<S> y(z.rows(), z.cols());
  for (int r = 0; r < z.rows(); ++r) {
    const S m = z.row(r).maxCoeff();
    Eigen::Array<S, 1, Eigen::Dynamic> e = (z.row(r).array() - m).exp();
    y.row(r) = (e / e.sum()).matrix();
  }
  return t.make(std::move(y), {ai},
                [ai](Tape<S>& tp, typename Tape<S>::Node& n) {
                  Mat<S>& ga = tp.grad_ref(ai);
                  for (int r = 0; r < n.value.rows(); ++r) {
                    const S dot = n.grad.row(r).cwiseProduct(n.value.row(r)).sum();
                    ga.row(r) += n.value.row(r).cwiseProduct(
                        n.grad.row(r) - Mat<S>::Constant(1, n.value.cols(), dot));
                  }
                },
                true);
}

template <class S>
Var<S> log_softmax_rows(Var<S> a, const Mat<S>* add_mask = nullptr) {
  Tape<S>& t = *a.tape;
  int ai = a.id;
  Mat<S> z = a.value();
  if (add_mask) z += *add_mask;
  Mat<S> y(z.rows(), z.cols());
  for (int r = 0; r < z.rows(); ++r) {
    const S m = z.row(r).maxCoeff();
    const S lse = m + std::log((z.row(r).array() - m).exp().sum());
    y.row(r) = (z.row(r).array() - lse).matrix();
  }
  return t.make(std::move(y), {ai},
                [ai](Tape<S>& tp, typename Tape<S>::Node& n) {
                  Mat<S>& ga = tp.grad_ref(ai);
                  for (int r = 0; r < n.value.rows(); ++r) {
                    const S gsum = n.grad.row(r).sum();
                    ga.row(r) += n.grad.row(r) - gsum * n.value.row(r).array().exp().matrix();
                  }
                },
                true);
}

// Row-wise layer normalization with learned gain/bias (both 1 x d).
template <class S>
Var<S> layer_norm_rows(Var<S> x, Var<S> gain, Var<S> bias, S eps = S(1e-5)) {
  detail::check_same_tape(x, gain);
  detail::check_same_tape(x, bias);
  Tape<S>& t = *x.tape;
  int xi = x.id, gi = gain.id, bi = bias.id;
  const Mat<S>& v = x.value();
  const int d = static_cast<int>(v.cols());
  Mat<S> y(v.rows(), d);
  for (int r = 0; r < v.rows(); ++r) {
    const S mu = v.row(r).mean();
    const S var = (v.row(r).array() - mu).square().mean();
    const S inv = S(1) / std::sqrt(var + eps);
    y.row(r) = (((v.row(r).array() - mu) * inv) * gain.value().row(0).array() +
                bias.value().row(0).array())
                   .matrix();
  }
  return t.make(std::move(y), {xi, gi, bi},
                [xi, gi, bi, eps, d](Tape<S>& tp, typename Tape<S>::Node& n) {
                  const Mat<S>& v = tp.value(xi);
                  const Mat<S>& g = tp.value(gi);
                  for (int r = 0; r < v.rows(); ++r) {
                    const S mu = v.row(r).mean();
                    const S var = (v.row(r).array() - mu).square().mean();
                    const S inv = S(1) / std::sqrt(var + eps);
                    Eigen::Array<S, 1, Eigen::Dynamic> xhat = (v.row(r).array() - mu) * inv;
                    Eigen::Array<S, 1, Eigen::Dynamic> dy = n.grad.row(r).array();
                    Eigen::Array<S, 1, Eigen::Dynamic> dxhat = dy * g.row(0).array();
                    const S sum_dxhat = dxhat.sum();
                    const S sum_dxhat_xhat = (dxhat * xhat).sum();
                    tp.grad_ref(xi).row(r) +=
                        (inv / S(d) * (S(d) * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)).matrix();
                    tp.grad_ref(gi).row(0) += (dy * xhat).matrix();
                    tp.grad_ref(bi).row(0) += dy.matrix();
                  }
                },
                true);
}

// ---------------------------------------------------------------------------
// Reductions and scalar plumbing
// ---------------------------------------------------------------------------

template <class S>
Var<S> sum_all(Var<S> a) {
  Tape<S>& t = *a.tape;
  int ai = a.id;
  Mat<S> y(1, 1);
  y(0, 0) = a.value().sum();
  return t.make(std::move(y), {ai},
                [ai](Tape<S>& tp, typename Tape<S>::Node& n) {
                  tp.grad_ref(ai).array() += n.grad(0, 0);
                },
                true);
}

template <class S>
Var<S> mean_all(Var<S> a) {
  const S inv = S(1) / static_cast<S>(a.value().size());
  return scale(sum_all(a), inv);
}

// single entry as a 1x1 node
template <class S>
Var<S> pick(Var<S> a, int r, int c) {
  Tape<S>& t = *a.tape;
  int ai = a.id;
  Mat<S> y(1, 1);
  y(0, 0) = a.value()(r, c);
  return t.make(std::move(y), {ai},
                [ai, r, c](Tape<S>& tp, typename Tape<S>::Node& n) {
                  tp.grad_ref(ai)(r, c) += n.grad(0, 0);
                },
                true);
}

// y = a / s, where s is a 1x1 node
template <class S>
Var<S> div_by(Var<S> a, Var<S> s) {
  detail::check_same_tape(a, s);
  Tape<S>& t = *a.tape;
  int ai = a.id, si = s.id;
  const S sv = s.value()(0, 0);
  return t.make(a.value() / sv, {ai, si},
                [ai, si](Tape<S>& tp, typename Tape<S>::Node& n) {
                  const S sv = tp.value(si)(0, 0);
                  tp.grad_ref(ai) += n.grad / sv;
                  tp.grad_ref(si)(0, 0) +=
                      -(n.grad.cwiseProduct(tp.value(ai))).sum() / (sv * sv);
                },
                true);
}

// Inverted dropout; identity when the tape has no dropout rng installed.
template <class S>
Var<S> dropout(Var<S> a) {
  Tape<S>& t = *a.tape;
  if (t.dropout_rng == nullptr || t.dropout_rate <= 0.0) return a;
  const S keep = S(1) - static_cast<S>(t.dropout_rate);
  Mat<S> mask(a.rows(), a.cols());
  for (int r = 0; r < mask.rows(); ++r) {
    for (int c = 0; c < mask.cols(); ++c) {
      mask(r, c) = t.dropout_rng->bernoulli(t.dropout_rate) ? S(0) : S(1) / keep;
    }
  }
  return mul(a, t.constant(mask));
}

}  // namespace congen

#endif  // CONGEN_AUTOGRAD_HPP
