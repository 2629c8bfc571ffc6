#include "nhedge/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

namespace nhedge::ad {

namespace {

thread_local bool g_grad_enabled = true;
thread_local std::uint64_t g_next_id = 1;

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << "[" << m.rows() << ", " << m.cols() << "]";
  return os.str();
}

std::shared_ptr<Node> leaf(Matrix value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->id = g_next_id++;
  return node;
}

// Creates the result node and records it on the tape when any parent
// requires a gradient and recording is enabled.
Tensor make_result(Matrix value, std::vector<std::shared_ptr<Node>> parents,
                   std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->id = g_next_id++;
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || p->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

Index broadcast_dim(Index a, Index b, const Matrix& ma, const Matrix& mb) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  throw ShapeError("cannot broadcast " + shape_str(ma) + " with " + shape_str(mb));
}

Matrix expand(const Matrix& m, Index rows, Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  // Eigen's replicate is slow for row-major row vectors; copy by hand.
  Matrix out(rows, cols);
  const Index mr = m.rows();
  const Index mc = m.cols();
  for (Index r = 0; r < rows; ++r) {
    const double* src = m.row(mr == 1 ? 0 : r).data();
    double* dst = out.row(r).data();
    if (mc == 1) {
      for (Index c = 0; c < cols; ++c) dst[c] = src[0];
    } else {
      for (Index c = 0; c < cols; ++c) dst[c] = src[c];
    }
  }
  return out;
}

// Sums a broadcast gradient back down to the operand's shape.
Matrix reduce_to(const Matrix& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  Matrix r = g;
  if (rows == 1 && r.rows() != 1) r = r.colwise().sum().eval();
  if (cols == 1 && r.cols() != 1) r = r.rowwise().sum().eval();
  return r;
}

template <typename Combine, typename GradA, typename GradB>
Tensor binary(const Tensor& a, const Tensor& b, Combine combine, GradA grad_a, GradB grad_b) {
  const Matrix& va = a.value();
  const Matrix& vb = b.value();
  const Index rows = broadcast_dim(va.rows(), vb.rows(), va, vb);
  const Index cols = broadcast_dim(va.cols(), vb.cols(), va, vb);
  Matrix ea = expand(va, rows, cols);
  Matrix eb = expand(vb, rows, cols);
  Matrix out = combine(ea, eb);
  auto na = a.node();
  auto nb = b.node();
  return make_result(std::move(out), {na, nb},
                     [na, nb, grad_a, grad_b, ea = std::move(ea), eb = std::move(eb)](Node& self) {
                       if (na->requires_grad)
                         na->accumulate(reduce_to(grad_a(self.grad, ea, eb), na->value.rows(),
                                                  na->value.cols()));
                       if (nb->requires_grad)
                         nb->accumulate(reduce_to(grad_b(self.grad, ea, eb), nb->value.rows(),
                                                  nb->value.cols()));
                     });
}

template <typename Forward, typename Local>
Tensor unary(const Tensor& a, Forward forward, Local local_grad) {
  Matrix out = forward(a.value());
  auto na = a.node();
  return make_result(std::move(out), {na}, [na, local_grad](Node& self) {
    na->accumulate(local_grad(self.grad, na->value, self.value));
  });
}

}  // namespace

void Node::accumulate(Matrix g) {
  if (grad.size() == 0) {
    grad = std::move(g);
  } else {
    grad += g;
  }
}

Tensor Tensor::constant(Matrix value) { return Tensor(leaf(std::move(value), false)); }

Tensor Tensor::parameter(Matrix value) { return Tensor(leaf(std::move(value), true)); }

Tensor Tensor::scalar(double value) {
  Matrix m(1, 1);
  m(0, 0) = value;
  return constant(std::move(m));
}

Tensor Tensor::column(std::span<const double> values) {
  Matrix m(static_cast<Index>(values.size()), 1);
  for (std::size_t i = 0; i < values.size(); ++i) m(static_cast<Index>(i), 0) = values[i];
  return constant(std::move(m));
}

Matrix Tensor::grad() const {
  if (has_grad()) return node_->grad;
  return Matrix::Zero(rows(), cols());
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(value()));
  return node_->value(0, 0);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

void backward(const Tensor& loss) {
  if (loss.size() != 1) throw ShapeError("backward requires a scalar loss, got " +
                                         shape_str(loss.value()));
  if (!loss.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{loss.node().get()};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad) stack.push_back(p.get());
    }
  }
  // Creation order is a topological order, so descending ids visit every
  // node after all of its consumers.
  std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->id > b->id; });

  loss.node()->accumulate(Matrix::Ones(1, 1));
  for (Node* n : order) {
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
  }
  for (Node* n : order) {
    if (n->backward_fn) n->grad.resize(0, 0);
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, [](const Matrix& x, const Matrix& y) -> Matrix { return x + y; },
      [](const Matrix& g, const Matrix&, const Matrix&) -> Matrix { return g; },
      [](const Matrix& g, const Matrix&, const Matrix&) -> Matrix { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, [](const Matrix& x, const Matrix& y) -> Matrix { return x - y; },
      [](const Matrix& g, const Matrix&, const Matrix&) -> Matrix { return g; },
      [](const Matrix& g, const Matrix&, const Matrix&) -> Matrix { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, [](const Matrix& x, const Matrix& y) -> Matrix { return x.cwiseProduct(y); },
      [](const Matrix& g, const Matrix&, const Matrix& y) -> Matrix { return g.cwiseProduct(y); },
      [](const Matrix& g, const Matrix& x, const Matrix&) -> Matrix { return g.cwiseProduct(x); });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](const Matrix& x) -> Matrix { return x * factor; },
      [factor](const Matrix& g, const Matrix&, const Matrix&) -> Matrix { return g * factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(
      a, [offset](const Matrix& x) -> Matrix { return x.array() + offset; },
      [](const Matrix& g, const Matrix&, const Matrix&) -> Matrix { return g; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul shape mismatch " + shape_str(a.value()) + " x " +
                     shape_str(b.value()));
  Matrix out = a.value() * b.value();
  auto na = a.node();
  auto nb = b.node();
  return make_result(std::move(out), {na, nb}, [na, nb](Node& self) {
    if (na->requires_grad) na->accumulate(self.grad * nb->value.transpose());
    if (nb->requires_grad) nb->accumulate(na->value.transpose() * self.grad);
  });
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (input.cols() != weight.rows())
    throw ShapeError("linear: input " + shape_str(input.value()) + " does not match weight " +
                     shape_str(weight.value()));
  if (bias.size() != weight.cols())
    throw ShapeError("linear: bias " + shape_str(bias.value()) + " does not match weight " +
                     shape_str(weight.value()));
  Matrix out(input.rows(), weight.cols());
  out.noalias() = input.value() * weight.value();
  const double* b = bias.value().data();
  for (Index r = 0; r < out.rows(); ++r) {
    double* o = out.row(r).data();
    for (Index c = 0; c < out.cols(); ++c) o[c] += b[c];
  }
  auto nx = input.node();
  auto nw = weight.node();
  auto nb = bias.node();
  return make_result(std::move(out), {nx, nw, nb}, [nx, nw, nb](Node& self) {
    if (nx->requires_grad) nx->accumulate(self.grad * nw->value.transpose());
    if (nw->requires_grad) nw->accumulate(nx->value.transpose() * self.grad);
    if (nb->requires_grad) {
      Matrix gb = self.grad.colwise().sum();
      gb.resize(nb->value.rows(), nb->value.cols());
      nb->accumulate(gb);
    }
  });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](const Matrix& x) -> Matrix { return x.cwiseMax(0.0); },
      [](const Matrix& g, const Matrix& x, const Matrix&) -> Matrix {
        return (x.array() > 0.0).select(g, 0.0);
      });
}

Tensor abs_value(const Tensor& a) {
  return unary(
      a, [](const Matrix& x) -> Matrix { return x.cwiseAbs(); },
      [](const Matrix& g, const Matrix& x, const Matrix&) -> Matrix {
        // sign(x), with 0 at x == 0
        Matrix s = (x.array() > 0.0).cast<double>() - (x.array() < 0.0).cast<double>();
        return g.cwiseProduct(s);
      });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, [](const Matrix& x) -> Matrix { return x.array().exp(); },
      [](const Matrix& g, const Matrix&, const Matrix& y) -> Matrix { return g.cwiseProduct(y); });
}

Tensor log(const Tensor& a) {
  if ((a.value().array() <= 0.0).any() || a.value().hasNaN())
    throw DomainError("log of non-positive value");
  return unary(
      a, [](const Matrix& x) -> Matrix { return x.array().log(); },
      [](const Matrix& g, const Matrix& x, const Matrix&) -> Matrix {
        return g.cwiseQuotient(x);
      });
}

Tensor maximum(const Tensor& a, double floor) {
  return unary(
      a, [floor](const Matrix& x) -> Matrix { return x.cwiseMax(floor); },
      [floor](const Matrix& g, const Matrix& x, const Matrix&) -> Matrix {
        return (x.array() > floor).select(g, 0.0);
      });
}

Tensor sum(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  auto na = a.node();
  return make_result(std::move(out), {na}, [na](Node& self) {
    na->accumulate(Matrix::Constant(na->value.rows(), na->value.cols(), self.grad(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor row_sum(const Tensor& a) {
  Matrix out = a.value().rowwise().sum();
  auto na = a.node();
  return make_result(std::move(out), {na}, [na](Node& self) {
    na->accumulate(expand(self.grad, self.grad.rows(), na->value.cols()));
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::shared_ptr<Node>> nodes;
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    nodes.push_back(p.node());
    offsets.push_back(off);
    off += p.cols();
  }
  auto captured = nodes;
  return make_result(std::move(out), std::move(nodes), [captured, offsets](Node& self) {
    for (std::size_t i = 0; i < captured.size(); ++i) {
      const auto& n = captured[i];
      if (n->requires_grad) n->accumulate(self.grad.middleCols(offsets[i], n->value.cols()));
    }
  });
}

Tensor slice_cols(const Tensor& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw ShapeError("slice_cols out of range for " + shape_str(a.value()));
  Matrix out = a.value().middleCols(start, count);
  auto na = a.node();
  return make_result(std::move(out), {na}, [na, start, count](Node& self) {
    Matrix g = Matrix::Zero(na->value.rows(), na->value.cols());
    g.middleCols(start, count) = self.grad;
    na->accumulate(g);
  });
}

Tensor reshape(const Tensor& a, Index rows, Index cols) {
  if (rows * cols != a.size())
    throw ShapeError("reshape of " + shape_str(a.value()) + " to [" + std::to_string(rows) +
                     ", " + std::to_string(cols) + "]");
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  auto na = a.node();
  return make_result(std::move(out), {na}, [na](Node& self) {
    na->accumulate(Eigen::Map<const Matrix>(self.grad.data(), na->value.rows(), na->value.cols()));
  });
}

Tensor place_columns(const Tensor& a, Index width, std::span<const Index> target_cols) {
  if (static_cast<Index>(target_cols.size()) != a.cols())
    throw ShapeError("place_columns: one target column per source column required");
  for (Index c : target_cols) {
    if (c < 0 || c >= width) throw ShapeError("place_columns: target column out of range");
  }
  Matrix out = Matrix::Zero(a.rows(), width);
  std::vector<Index> targets(target_cols.begin(), target_cols.end());
  for (Index i = 0; i < a.cols(); ++i) out.col(targets[i]) += a.value().col(i);
  auto na = a.node();
  return make_result(std::move(out), {na}, [na, targets](Node& self) {
    Matrix g(na->value.rows(), na->value.cols());
    for (Index i = 0; i < g.cols(); ++i) g.col(i) = self.grad.col(targets[i]);
    na->accumulate(g);
  });
}

Tensor select_rows(const Tensor& a, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) throw ShapeError("select_rows: index out of range");
    out.row(static_cast<Index>(i)) = a.value().row(rows[i]);
  }
  std::vector<Index> idx(rows.begin(), rows.end());
  auto na = a.node();
  return make_result(std::move(out), {na}, [na, idx](Node& self) {
    Matrix g = Matrix::Zero(na->value.rows(), na->value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Index>(i));
    na->accumulate(g);
  });
}

std::vector<Index> k_smallest_rows(const Matrix& column, Index k) {
  if (column.cols() != 1) throw ShapeError("k_smallest_rows expects a column");
  if (k < 1 || k > column.rows()) throw ShapeError("k_smallest_rows: k out of range");
  std::vector<Index> idx(static_cast<std::size_t>(column.rows()));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](Index a, Index b) { return column(a, 0) < column(b, 0); });
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

Tensor k_worst_mean(const Tensor& column, Index k) {
  auto idx = k_smallest_rows(column.value(), k);
  return mean(select_rows(column, idx));
}

Tensor layer_norm(const Tensor& input, const Tensor& gain, const Tensor& shift, double epsilon) {
  const Index d = input.cols();
  if (d < 1) throw ShapeError("layer_norm needs at least one column");
  if (gain.size() != d || shift.size() != d)
    throw ShapeError("layer_norm: gain/shift width must equal " + std::to_string(d));
  if (!(epsilon > 0.0)) throw DomainError("layer_norm epsilon must be positive");

  const Matrix& x = input.value();
  const Eigen::Map<const Eigen::RowVectorXd> g(gain.value().data(), d);
  const Eigen::Map<const Eigen::RowVectorXd> s(shift.value().data(), d);

  Eigen::VectorXd mu = x.rowwise().mean();
  Matrix centered = x.colwise() - mu;
  Eigen::VectorXd inv_std =
      ((centered.array().square().rowwise().sum() / static_cast<double>(d)) + epsilon)
          .rsqrt();
  Matrix xhat = centered.array().colwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * g.array()).rowwise() + s.array();

  auto nx = input.node();
  auto ng = gain.node();
  auto ns = shift.node();
  return make_result(std::move(out), {nx, ng, ns},
                     [nx, ng, ns, xhat = std::move(xhat), inv_std = std::move(inv_std), d](Node& self) {
                       const Matrix& dy = self.grad;
                       if (ng->requires_grad) {
                         Matrix gg = dy.cwiseProduct(xhat).colwise().sum();
                         gg.resize(ng->value.rows(), ng->value.cols());
                         ng->accumulate(gg);
                       }
                       if (ns->requires_grad) {
                         Matrix gs = dy.colwise().sum();
                         gs.resize(ns->value.rows(), ns->value.cols());
                         ns->accumulate(gs);
                       }
                       if (nx->requires_grad) {
                         const Eigen::Map<const Eigen::RowVectorXd> gv(ng->value.data(), d);
                         Matrix dxhat = dy.array().rowwise() * gv.array();
                         Eigen::VectorXd m1 = dxhat.rowwise().mean();
                         Eigen::VectorXd m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
                         Matrix dx = dxhat.colwise() - m1;
                         dx -= (xhat.array().colwise() * m2.array()).matrix();
                         dx = dx.array().colwise() * inv_std.array();
                         nx->accumulate(dx);
                       }
                     });
}

namespace {

void check_attention_shapes(const Matrix& q, const Matrix& k, Index group) {
  if (group < 1) throw ShapeError("attention group size must be >= 1");
  if (q.rows() != k.rows() || q.cols() != k.cols())
    throw ShapeError("attention: query/key shapes differ");
  if (q.rows() % group != 0) throw ShapeError("attention: rows not divisible by group size");
}

inline double dot(const double* x, const double* y, Index d) {
  double acc = 0.0;
  for (Index c = 0; c < d; ++c) acc += x[c] * y[c];
  return acc;
}

}  // namespace

Matrix attention_weights(const Matrix& query, const Matrix& key, Index group) {
  check_attention_shapes(query, key, group);
  const Index d = query.cols();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix out(query.rows(), group);
  for (Index s = 0; s < query.rows(); s += group) {
    for (Index i = 0; i < group; ++i) {
      double* w = out.row(s + i).data();
      const double* qi = query.row(s + i).data();
      double top = -std::numeric_limits<double>::infinity();
      for (Index j = 0; j < group; ++j) {
        w[j] = dot(qi, key.row(s + j).data(), d) * inv_sqrt_d;
        top = std::max(top, w[j]);
      }
      double z = 0.0;
      for (Index j = 0; j < group; ++j) z += (w[j] = std::exp(w[j] - top));
      for (Index j = 0; j < group; ++j) w[j] /= z;
    }
  }
  return out;
}

Tensor attention(const Tensor& query, const Tensor& key, const Tensor& value, Index group) {
  const Matrix& q = query.value();
  const Matrix& k = key.value();
  const Matrix& v = value.value();
  check_attention_shapes(q, k, group);
  if (v.rows() != q.rows()) throw ShapeError("attention: value rows differ from query rows");

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Matrix weights = attention_weights(q, k, group);
  const Index dv_cols = v.cols();
  Matrix out = Matrix::Zero(q.rows(), dv_cols);
  for (Index s = 0; s < q.rows(); s += group) {
    for (Index i = 0; i < group; ++i) {
      double* o = out.row(s + i).data();
      for (Index j = 0; j < group; ++j) {
        const double w = weights(s + i, j);
        const double* vj = v.row(s + j).data();
        for (Index c = 0; c < dv_cols; ++c) o[c] += w * vj[c];
      }
    }
  }

  auto nq = query.node();
  auto nk = key.node();
  auto nv = value.node();
  return make_result(
      std::move(out), {nq, nk, nv},
      [nq, nk, nv, group, inv_sqrt_d, weights = std::move(weights)](Node& self) {
        const Matrix& dout = self.grad;
        const Matrix& qv = nq->value;
        const Matrix& kv = nk->value;
        const Matrix& vv = nv->value;
        const Index d = qv.cols();
        const Index dvc = vv.cols();
        Matrix dq = Matrix::Zero(qv.rows(), d);
        Matrix dk = Matrix::Zero(kv.rows(), d);
        Matrix dv = Matrix::Zero(vv.rows(), dvc);
        std::vector<double> da(static_cast<std::size_t>(group));
        for (Index s = 0; s < qv.rows(); s += group) {
          for (Index i = 0; i < group; ++i) {
            const double* go = dout.row(s + i).data();
            double inner = 0.0;
            for (Index j = 0; j < group; ++j) {
              const double a = weights(s + i, j);
              double* dvj = dv.row(s + j).data();
              for (Index c = 0; c < dvc; ++c) dvj[c] += a * go[c];
              da[static_cast<std::size_t>(j)] = dot(go, vv.row(s + j).data(), dvc);
              inner += a * da[static_cast<std::size_t>(j)];
            }
            double* dqi = dq.row(s + i).data();
            const double* qi = qv.row(s + i).data();
            for (Index j = 0; j < group; ++j) {
              const double ds = weights(s + i, j) * (da[static_cast<std::size_t>(j)] - inner) * inv_sqrt_d;
              const double* kj = kv.row(s + j).data();
              double* dkj = dk.row(s + j).data();
              for (Index c = 0; c < d; ++c) {
                dqi[c] += ds * kj[c];
                dkj[c] += ds * qi[c];
              }
            }
          }
        }
        if (nq->requires_grad) nq->accumulate(dq);
        if (nk->requires_grad) nk->accumulate(dk);
        if (nv->requires_grad) nv->accumulate(dv);
      });
}

Tensor group_mean(const Tensor& a, Index group) {
  if (group < 1 || a.rows() % group != 0)
    throw ShapeError("group_mean: rows not divisible by group size");
  const Index n = a.rows() / group;
  const Index cols = a.cols();
  const double w = 1.0 / static_cast<double>(group);
  Matrix out = Matrix::Zero(n, cols);
  const Matrix& x = a.value();
  for (Index i = 0; i < n; ++i) {
    double* o = out.row(i).data();
    for (Index r = 0; r < group; ++r) {
      const double* xr = x.row(i * group + r).data();
      for (Index c = 0; c < cols; ++c) o[c] += xr[c];
    }
    for (Index c = 0; c < cols; ++c) o[c] *= w;
  }
  auto na = a.node();
  return make_result(std::move(out), {na}, [na, group, n, w](Node& self) {
    const Index cols = self.grad.cols();
    Matrix g(na->value.rows(), cols);
    for (Index i = 0; i < n; ++i) {
      const double* gi = self.grad.row(i).data();
      for (Index r = 0; r < group; ++r) {
        double* dst = g.row(i * group + r).data();
        for (Index c = 0; c < cols; ++c) dst[c] = gi[c] * w;
      }
    }
    na->accumulate(g);
  });
}

}  // namespace nhedge::ad
