#include "stpt/num/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace stpt {

namespace {

using detail::TensorNode;
using detail::accumulate;

Eigen::Map<const RowMat> as_mat(const Arr& a, std::int64_t r, std::int64_t c) {
  return Eigen::Map<const RowMat>(a.data(), r, c);
}

Arr flat(const RowMat& m) { return Eigen::Map<const Arr>(m.data(), m.size()); }

// Rank-1 tensors are treated as a single row; rank-2 as [rows, n].
std::pair<std::int64_t, std::int64_t> row_view(const Shape& s) {
  if (s.size() == 1) return {1, s[0]};
  if (s.size() == 2) return {s[0], s[1]};
  throw std::invalid_argument("expected rank-1 or rank-2 tensor, got " + shape_str(s));
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

constexpr double kLogClamp = 1e-12;
constexpr double kGeluC0 = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluC1 = 0.044715;

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  return make_op_tensor(a.shape(), a.array() + b.array(), "add", {a, b}, [](TensorNode& self) {
    accumulate(*self.inputs[0], self.grad);
    accumulate(*self.inputs[1], self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  return make_op_tensor(a.shape(), a.array() - b.array(), "sub", {a, b}, [](TensorNode& self) {
    accumulate(*self.inputs[0], self.grad);
    accumulate(*self.inputs[1], -self.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  return make_op_tensor(a.shape(), a.array() * b.array(), "mul", {a, b}, [](TensorNode& self) {
    accumulate(*self.inputs[0], self.grad * self.inputs[1]->value);
    accumulate(*self.inputs[1], self.grad * self.inputs[0]->value);
  });
}

Tensor scale(const Tensor& x, double c) {
  return make_op_tensor(x.shape(), x.array() * c, "scale", {x}, [c](TensorNode& self) {
    accumulate(*self.inputs[0], self.grad * c);
  });
}

Tensor add_scalar(const Tensor& x, double c) {
  return make_op_tensor(x.shape(), x.array() + c, "add_scalar", {x}, [](TensorNode& self) {
    accumulate(*self.inputs[0], self.grad);
  });
}

Tensor add_rowwise(const Tensor& x, const Tensor& row) {
  if (x.rank() != 2 || row.rank() != 1 || x.cols() != row.extent(0)) {
    throw std::invalid_argument("add_rowwise: incompatible shapes " + shape_str(x.shape()) +
                                " and " + shape_str(row.shape()));
  }
  const std::int64_t L = x.rows(), d = x.cols();
  RowMat out = as_mat(x.array(), L, d);
  out.rowwise() += row.vec().transpose();
  return make_op_tensor(x.shape(), flat(out), "add_rowwise", {x, row}, [L, d](TensorNode& self) {
    accumulate(*self.inputs[0], self.grad);
    accumulate(*self.inputs[1], flat(as_mat(self.grad, L, d).colwise().sum()));
  });
}

Tensor div(const Tensor& a, const Tensor& b_scalar) {
  if (b_scalar.numel() != 1) {
    throw std::invalid_argument("div: divisor must have one element, got " +
                                shape_str(b_scalar.shape()));
  }
  const double b = b_scalar.array()[0];
  return make_op_tensor(a.shape(), a.array() / b, "div", {a, b_scalar}, [](TensorNode& self) {
    const double bv = self.inputs[1]->value[0];
    accumulate(*self.inputs[0], self.grad / bv);
    const double db = -(self.grad * self.inputs[0]->value).sum() / (bv * bv);
    accumulate(*self.inputs[1], Arr::Constant(1, db));
  });
}

Tensor sqrt(const Tensor& x) {
  if ((x.array() < 0.0).any()) throw std::invalid_argument("sqrt: negative input");
  return make_op_tensor(x.shape(), x.array().sqrt(), "sqrt", {x}, [](TensorNode& self) {
    accumulate(*self.inputs[0], self.grad * 0.5 / self.value);
  });
}

Tensor gelu(const Tensor& x) {
  const Arr& v = x.array();
  Arr inner = kGeluC0 * (v + kGeluC1 * v.cube());
  Arr t = inner.tanh();
  Arr y = 0.5 * v * (1.0 + t);
  return make_op_tensor(x.shape(), std::move(y), "gelu", {x}, [](TensorNode& self) {
    const Arr& v = self.inputs[0]->value;
    Arr t = (kGeluC0 * (v + kGeluC1 * v.cube())).tanh();
    Arr dydx = 0.5 * (1.0 + t) +
               0.5 * v * (1.0 - t.square()) * kGeluC0 * (1.0 + 3.0 * kGeluC1 * v.square());
    accumulate(*self.inputs[0], self.grad * dydx);
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner extents disagree: " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  const std::int64_t m = a.rows(), k = a.cols(), n = b.cols();
  RowMat out = as_mat(a.array(), m, k) * as_mat(b.array(), k, n);
  return make_op_tensor({m, n}, flat(out), "matmul", {a, b}, [m, k, n](TensorNode& self) {
    auto g = as_mat(self.grad, m, n);
    auto av = as_mat(self.inputs[0]->value, m, k);
    auto bv = as_mat(self.inputs[1]->value, k, n);
    accumulate(*self.inputs[0], flat(g * bv.transpose()));
    accumulate(*self.inputs[1], flat(av.transpose() * g));
  });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw std::invalid_argument("transpose: expected rank-2, got " + shape_str(x.shape()));
  const std::int64_t r = x.rows(), c = x.cols();
  RowMat out = as_mat(x.array(), r, c).transpose();
  return make_op_tensor({c, r}, flat(out), "transpose", {x}, [r, c](TensorNode& self) {
    accumulate(*self.inputs[0], flat(RowMat(as_mat(self.grad, c, r).transpose())));
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " +
                                shape_str(shape));
  }
  return make_op_tensor(std::move(shape), x.array(), "reshape", {x}, [](TensorNode& self) {
    accumulate(*self.inputs[0], self.grad);
  });
}

static Tensor softmax_last(const Tensor& x) {
  if (x.array().isNaN().any()) throw std::runtime_error("softmax: NaN in input");
  auto [rows, n] = row_view(x.shape());
  Arr out(x.numel());
  for (std::int64_t r = 0; r < rows; ++r) {
    auto xr = x.array().segment(r * n, n);
    const double m = xr.maxCoeff();
    Arr e = (xr - m).exp();
    out.segment(r * n, n) = e / e.sum();
  }
  return make_op_tensor(x.shape(), std::move(out), "softmax", {x}, [rows = rows, n = n](TensorNode& self) {
    Arr dx(self.value.size());
    for (std::int64_t r = 0; r < rows; ++r) {
      auto y = self.value.segment(r * n, n);
      auto g = self.grad.segment(r * n, n);
      const double dot = (g * y).sum();
      dx.segment(r * n, n) = y * (g - dot);
    }
    accumulate(*self.inputs[0], dx);
  });
}

Tensor softmax(const Tensor& x, int axis) {
  const int rank = x.rank();
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw std::invalid_argument("softmax: axis out of range");
  if (axis == rank - 1) return softmax_last(x);
  if (rank == 2 && axis == 0) return transpose(softmax_last(transpose(x)));
  throw std::invalid_argument("softmax: unsupported axis for " + shape_str(x.shape()));
}

Tensor log_softmax(const Tensor& x) {
  if (x.array().isNaN().any()) throw std::runtime_error("log_softmax: NaN in input");
  auto [rows, n] = row_view(x.shape());
  Arr out(x.numel());
  for (std::int64_t r = 0; r < rows; ++r) {
    auto xr = x.array().segment(r * n, n);
    const double m = xr.maxCoeff();
    const double lse = m + std::log((xr - m).exp().sum());
    out.segment(r * n, n) = xr - lse;
  }
  return make_op_tensor(x.shape(), std::move(out), "log_softmax", {x},
                        [rows = rows, n = n](TensorNode& self) {
    Arr dx(self.value.size());
    for (std::int64_t r = 0; r < rows; ++r) {
      auto ls = self.value.segment(r * n, n);
      auto g = self.grad.segment(r * n, n);
      dx.segment(r * n, n) = g - ls.exp() * g.sum();
    }
    accumulate(*self.inputs[0], dx);
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  auto [rows, d] = row_view(x.shape());
  if (d < 2) throw std::invalid_argument("layer_norm: needs at least 2 features, got " + shape_str(x.shape()));
  if (gain.numel() != d || bias.numel() != d) {
    throw std::invalid_argument("layer_norm: gain/bias size mismatch with " + shape_str(x.shape()));
  }
  Arr out(x.numel());
  for (std::int64_t r = 0; r < rows; ++r) {
    auto xr = x.array().segment(r * d, d);
    const double mu = xr.mean();
    const double var = (xr - mu).square().mean();
    const double inv = 1.0 / std::sqrt(var + eps);
    out.segment(r * d, d) = gain.array() * ((xr - mu) * inv) + bias.array();
  }
  return make_op_tensor(x.shape(), std::move(out), "layer_norm", {x, gain, bias},
                        [rows = rows, d = d, eps](TensorNode& self) {
    const Arr& xv = self.inputs[0]->value;
    const Arr& gv = self.inputs[1]->value;
    Arr dx(xv.size());
    Arr dgain = Arr::Zero(d);
    Arr dbias = Arr::Zero(d);
    for (std::int64_t r = 0; r < rows; ++r) {
      auto xr = xv.segment(r * d, d);
      auto g = self.grad.segment(r * d, d);
      const double mu = xr.mean();
      const double var = (xr - mu).square().mean();
      const double inv = 1.0 / std::sqrt(var + eps);
      Arr xhat = (xr - mu) * inv;
      Arr gh = g * gv;
      const double m1 = gh.mean();
      const double m2 = (gh * xhat).mean();
      dx.segment(r * d, d) = inv * (gh - m1 - xhat * m2);
      dgain += g * xhat;
      dbias += g;
    }
    accumulate(*self.inputs[0], dx);
    accumulate(*self.inputs[1], dgain);
    accumulate(*self.inputs[2], dbias);
  });
}

Tensor sum(const Tensor& x) {
  const std::int64_t n = x.numel();
  return make_op_tensor(Shape{}, Arr::Constant(1, x.array().sum()), "sum", {x},
                        [n](TensorNode& self) {
    accumulate(*self.inputs[0], Arr::Constant(n, self.grad[0]));
  });
}

Tensor mean(const Tensor& x) {
  const std::int64_t n = x.numel();
  return make_op_tensor(Shape{}, Arr::Constant(1, x.array().mean()), "mean", {x},
                        [n](TensorNode& self) {
    accumulate(*self.inputs[0], Arr::Constant(n, self.grad[0] / static_cast<double>(n)));
  });
}

namespace {

void check_distribution(const char* op, const Arr& p, std::int64_t offset, std::int64_t n) {
  double s = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double v = p[offset + i];
    if (v < 0.0) throw std::invalid_argument(std::string(op) + ": p has a negative entry");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-6) {
    throw std::invalid_argument(std::string(op) + ": p is not normalized (sum=" + std::to_string(s) + ")");
  }
}

double kl_row(const Arr& p, const Arr& lq, std::int64_t offset, std::int64_t n) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double pi = p[offset + i];
    if (pi > 0.0) acc += pi * (std::log(std::max(pi, kLogClamp)) - lq[offset + i]);
  }
  return acc;
}

void kl_row_backward(TensorNode& self, double g, std::int64_t offset, std::int64_t n, Arr& dp, Arr& dlq) {
  const Arr& p = self.inputs[0]->value;
  const Arr& lq = self.inputs[1]->value;
  for (std::int64_t i = 0; i < n; ++i) {
    const double pi = p[offset + i];
    dp[offset + i] += g * (std::log(std::max(pi, kLogClamp)) + 1.0 - lq[offset + i]);
    dlq[offset + i] += -g * pi;
  }
}

}  // namespace

Tensor kl_divergence(const Tensor& p, const Tensor& log_q) {
  check_same_shape("kl_divergence", p, log_q);
  if (p.rank() != 1) throw std::invalid_argument("kl_divergence: expected rank-1, got " + shape_str(p.shape()));
  const std::int64_t n = p.numel();
  check_distribution("kl_divergence", p.array(), 0, n);
  const double v = kl_row(p.array(), log_q.array(), 0, n);
  return make_op_tensor(Shape{}, Arr::Constant(1, v), "kl_divergence", {p, log_q},
                        [n](TensorNode& self) {
    Arr dp = Arr::Zero(n), dlq = Arr::Zero(n);
    kl_row_backward(self, self.grad[0], 0, n, dp, dlq);
    accumulate(*self.inputs[0], dp);
    accumulate(*self.inputs[1], dlq);
  });
}

Tensor kl_divergence_rows_sum(const Tensor& p, const Tensor& log_q) {
  check_same_shape("kl_divergence_rows_sum", p, log_q);
  if (p.rank() != 2) throw std::invalid_argument("kl_divergence_rows_sum: expected rank-2");
  const std::int64_t rows = p.rows(), n = p.cols();
  double v = 0.0;
  for (std::int64_t r = 0; r < rows; ++r) {
    check_distribution("kl_divergence_rows_sum", p.array(), r * n, n);
    v += kl_row(p.array(), log_q.array(), r * n, n);
  }
  return make_op_tensor(Shape{}, Arr::Constant(1, v), "kl_divergence_rows_sum", {p, log_q},
                        [rows, n](TensorNode& self) {
    Arr dp = Arr::Zero(rows * n), dlq = Arr::Zero(rows * n);
    for (std::int64_t r = 0; r < rows; ++r) kl_row_backward(self, self.grad[0], r * n, n, dp, dlq);
    accumulate(*self.inputs[0], dp);
    accumulate(*self.inputs[1], dlq);
  });
}

namespace {

// Stable log-softmax of one row into out.
void log_softmax_row(const Arr& x, std::int64_t offset, std::int64_t n, Arr& out) {
  auto xr = x.segment(offset, n);
  const double m = xr.maxCoeff();
  const double lse = m + std::log((xr - m).exp().sum());
  out = xr - lse;
}

}  // namespace

Tensor cross_entropy(const Tensor& logits, std::int64_t target) {
  if (logits.rank() != 1) throw std::invalid_argument("cross_entropy: expected rank-1 logits");
  const std::int64_t n = logits.numel();
  if (target < 0 || target >= n) {
    throw std::out_of_range("cross_entropy: target " + std::to_string(target) + " out of range for " +
                            std::to_string(n) + " classes");
  }
  Arr ls(n);
  log_softmax_row(logits.array(), 0, n, ls);
  return make_op_tensor(Shape{}, Arr::Constant(1, -ls[target]), "cross_entropy", {logits},
                        [n, target](TensorNode& self) {
    Arr ls(n);
    log_softmax_row(self.inputs[0]->value, 0, n, ls);
    Arr dx = ls.exp() * self.grad[0];
    dx[target] -= self.grad[0];
    accumulate(*self.inputs[0], dx);
  });
}

Tensor cross_entropy_rows(const Tensor& logits, std::span<const int> targets, Reduction reduction) {
  if (logits.rank() != 2) throw std::invalid_argument("cross_entropy_rows: expected rank-2 logits");
  const std::int64_t rows = logits.rows(), n = logits.cols();
  if (static_cast<std::int64_t>(targets.size()) != rows) {
    throw std::invalid_argument("cross_entropy_rows: " + std::to_string(targets.size()) +
                                " targets for " + std::to_string(rows) + " rows");
  }
  std::vector<int> tgt(targets.begin(), targets.end());
  for (int t : tgt) {
    if (t < 0 || t >= n) {
      throw std::out_of_range("cross_entropy_rows: target " + std::to_string(t) + " out of range for " +
                              std::to_string(n) + " classes");
    }
  }
  const double norm = reduction == Reduction::Mean ? 1.0 / static_cast<double>(rows) : 1.0;
  double v = 0.0;
  Arr ls(n);
  for (std::int64_t r = 0; r < rows; ++r) {
    log_softmax_row(logits.array(), r * n, n, ls);
    v -= ls[tgt[static_cast<std::size_t>(r)]];
  }
  return make_op_tensor(Shape{}, Arr::Constant(1, v * norm), "cross_entropy_rows", {logits},
                        [rows, n, norm, tgt = std::move(tgt)](TensorNode& self) {
    Arr dx(rows * n);
    Arr ls(n);
    for (std::int64_t r = 0; r < rows; ++r) {
      log_softmax_row(self.inputs[0]->value, r * n, n, ls);
      Arr row = ls.exp();
      row[tgt[static_cast<std::size_t>(r)]] -= 1.0;
      dx.segment(r * n, n) = row * (self.grad[0] * norm);
    }
    accumulate(*self.inputs[0], dx);
  });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2) throw std::invalid_argument("embedding: table must be rank-2");
  const std::int64_t V = table.rows(), d = table.cols();
  const std::int64_t n = static_cast<std::int64_t>(ids.size());
  if (n == 0) throw std::invalid_argument("embedding: empty id sequence");
  for (int id : ids) {
    if (id < 0 || id >= V) {
      throw std::out_of_range("embedding: id " + std::to_string(id) + " out of range for table " +
                              shape_str(table.shape()));
    }
  }
  std::vector<int> idv(ids.begin(), ids.end());
  Arr out(n * d);
  for (std::int64_t i = 0; i < n; ++i) {
    out.segment(i * d, d) = table.array().segment(static_cast<std::int64_t>(idv[i]) * d, d);
  }
  return make_op_tensor({n, d}, std::move(out), "embedding", {table},
                        [d, idv = std::move(idv)](TensorNode& self) {
    Arr dt = Arr::Zero(self.inputs[0]->value.size());
    for (std::size_t i = 0; i < idv.size(); ++i) {
      dt.segment(static_cast<std::int64_t>(idv[i]) * d, d) +=
          self.grad.segment(static_cast<std::int64_t>(i) * d, d);
    }
    accumulate(*self.inputs[0], dt);
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::int64_t> rows) {
  if (x.rank() != 2) throw std::invalid_argument("gather_rows: expected rank-2");
  const std::int64_t R = x.rows(), d = x.cols();
  const std::int64_t n = static_cast<std::int64_t>(rows.size());
  if (n == 0) throw std::invalid_argument("gather_rows: empty row list");
  for (auto r : rows) {
    if (r < 0 || r >= R) throw std::out_of_range("gather_rows: row " + std::to_string(r) + " out of range");
  }
  std::vector<std::int64_t> rv(rows.begin(), rows.end());
  Arr out(n * d);
  for (std::int64_t i = 0; i < n; ++i) out.segment(i * d, d) = x.array().segment(rv[static_cast<std::size_t>(i)] * d, d);
  return make_op_tensor({n, d}, std::move(out), "gather_rows", {x},
                        [d, rv = std::move(rv)](TensorNode& self) {
    Arr dx = Arr::Zero(self.inputs[0]->value.size());
    for (std::size_t i = 0; i < rv.size(); ++i) {
      dx.segment(rv[i] * d, d) += self.grad.segment(static_cast<std::int64_t>(i) * d, d);
    }
    accumulate(*self.inputs[0], dx);
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no parts");
  if (axis != 0) throw std::invalid_argument("concat: only axis 0 is supported");
  const int rank = parts[0].rank();
  if (rank != 1 && rank != 2) throw std::invalid_argument("concat: expected rank-1 or rank-2 parts");
  const std::int64_t inner = rank == 2 ? parts[0].cols() : 1;
  std::int64_t total_rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank || (rank == 2 && p.cols() != inner)) {
      throw std::invalid_argument("concat: part shape mismatch " + shape_str(p.shape()));
    }
    total_rows += rank == 2 ? p.rows() : p.extent(0);
  }
  Arr out(total_rows * inner);
  std::vector<std::int64_t> sizes;
  std::int64_t off = 0;
  for (const auto& p : parts) {
    out.segment(off, p.numel()) = p.array();
    sizes.push_back(p.numel());
    off += p.numel();
  }
  Shape shape = rank == 2 ? Shape{total_rows, inner} : Shape{total_rows};
  return make_op_tensor(std::move(shape), std::move(out), "concat", parts,
                        [sizes = std::move(sizes)](TensorNode& self) {
    std::int64_t off = 0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      accumulate(*self.inputs[i], self.grad.segment(off, sizes[i]));
      off += sizes[i];
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const std::int64_t r = parts[0].rows();
  std::int64_t total_cols = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.rows() != r) {
      throw std::invalid_argument("concat_cols: part shape mismatch " + shape_str(p.shape()));
    }
    total_cols += p.cols();
  }
  RowMat out(r, total_cols);
  std::vector<std::int64_t> widths;
  std::int64_t off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.mat();
    widths.push_back(p.cols());
    off += p.cols();
  }
  return make_op_tensor({r, total_cols}, flat(out), "concat_cols", parts,
                        [r, total_cols, widths = std::move(widths)](TensorNode& self) {
    auto g = as_mat(self.grad, r, total_cols);
    std::int64_t off = 0;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      accumulate(*self.inputs[i], flat(RowMat(g.middleCols(off, widths[i]))));
      off += widths[i];
    }
  });
}

Tensor slice_rows(const Tensor& x, std::int64_t begin, std::int64_t end) {
  auto [R, d] = row_view(x.shape());
  if (begin < 0 || end > R || begin >= end) {
    throw std::out_of_range("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                            ") invalid for " + shape_str(x.shape()));
  }
  const std::int64_t n = end - begin;
  Arr out = x.array().segment(begin * d, n * d);
  Shape shape = x.rank() == 2 ? Shape{n, d} : Shape{n};
  return make_op_tensor(std::move(shape), std::move(out), "slice_rows", {x},
                        [begin, n, d = d](TensorNode& self) {
    Arr dx = Arr::Zero(self.inputs[0]->value.size());
    dx.segment(begin * d, n * d) = self.grad;
    accumulate(*self.inputs[0], dx);
  });
}

Tensor slice_cols(const Tensor& x, std::int64_t begin, std::int64_t end) {
  if (x.rank() != 2) throw std::invalid_argument("slice_cols: expected rank-2");
  const std::int64_t R = x.rows(), C = x.cols();
  if (begin < 0 || end > C || begin >= end) {
    throw std::out_of_range("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                            ") invalid for " + shape_str(x.shape()));
  }
  const std::int64_t w = end - begin;
  RowMat out = x.mat().middleCols(begin, w);
  return make_op_tensor({R, w}, flat(out), "slice_cols", {x}, [R, C, begin, w](TensorNode& self) {
    RowMat dx = RowMat::Zero(R, C);
    dx.middleCols(begin, w) = as_mat(self.grad, R, w);
    accumulate(*self.inputs[0], flat(dx));
  });
}

Tensor select_row(const Tensor& x, std::int64_t row) {
  if (x.rank() != 2) throw std::invalid_argument("select_row: expected rank-2");
  if (row < 0 || row >= x.rows()) throw std::out_of_range("select_row: row out of range");
  const std::int64_t d = x.cols();
  Arr out = x.array().segment(row * d, d);
  return make_op_tensor({d}, std::move(out), "select_row", {x}, [row, d](TensorNode& self) {
    Arr dx = Arr::Zero(self.inputs[0]->value.size());
    dx.segment(row * d, d) = self.grad;
    accumulate(*self.inputs[0], dx);
  });
}

Tensor unfold_rows(const Tensor& x, int kernel, int stride) {
  if (x.rank() != 2) throw std::invalid_argument("unfold_rows: expected rank-2");
  if (kernel <= 0 || stride <= 0) throw std::invalid_argument("unfold_rows: kernel and stride must be positive");
  const std::int64_t T = x.rows(), f = x.cols();
  if (T < kernel) {
    throw std::invalid_argument("unfold_rows: input length " + std::to_string(T) +
                                " shorter than kernel " + std::to_string(kernel));
  }
  const std::int64_t To = (T - kernel) / stride + 1;
  const std::int64_t w = static_cast<std::int64_t>(kernel) * f;
  Arr out(To * w);
  for (std::int64_t t = 0; t < To; ++t) {
    out.segment(t * w, w) = x.array().segment(t * stride * f, w);
  }
  return make_op_tensor({To, w}, std::move(out), "unfold_rows", {x},
                        [To, w, f, stride](TensorNode& self) {
    Arr dx = Arr::Zero(self.inputs[0]->value.size());
    for (std::int64_t t = 0; t < To; ++t) {
      dx.segment(t * stride * f, w) += self.grad.segment(t * w, w);
    }
    accumulate(*self.inputs[0], dx);
  });
}

Tensor mask_rows(const Tensor& x, const std::vector<std::int64_t>& rows, const Tensor& fill) {
  if (x.rank() != 2) throw std::invalid_argument("mask_rows: expected rank-2");
  const std::int64_t L = x.rows(), d = x.cols();
  if (fill.rank() != 1 || fill.extent(0) != d) {
    throw std::invalid_argument("mask_rows: fill shape " + shape_str(fill.shape()) +
                                " incompatible with " + shape_str(x.shape()));
  }
  for (auto r : rows) {
    if (r < 0 || r >= L) throw std::out_of_range("mask_rows: row " + std::to_string(r) + " out of range");
  }
  Arr out = x.array();
  for (auto r : rows) out.segment(r * d, d) = fill.array();
  return make_op_tensor(x.shape(), std::move(out), "mask_rows", {x, fill},
                        [rows, d](TensorNode& self) {
    Arr dx = self.grad;
    Arr dfill = Arr::Zero(d);
    for (auto r : rows) {
      dfill += self.grad.segment(r * d, d);
      dx.segment(r * d, d).setZero();
    }
    accumulate(*self.inputs[0], dx);
    accumulate(*self.inputs[1], dfill);
  });
}

Tensor cosine_rows(const Tensor& u, const Tensor& v) {
  if (u.rank() != 1 || v.rank() != 2 || v.cols() != u.extent(0)) {
    throw std::invalid_argument("cosine_rows: incompatible shapes " + shape_str(u.shape()) + " and " +
                                shape_str(v.shape()));
  }
  const std::int64_t K = v.rows(), d = v.cols();
  const double un = std::sqrt(u.array().square().sum());
  if (un == 0.0) throw std::invalid_argument("cosine_rows: zero reference vector");
  Arr out(K);
  for (std::int64_t k = 0; k < K; ++k) {
    auto vk = v.array().segment(k * d, d);
    const double vn = std::sqrt(vk.square().sum());
    if (vn == 0.0) throw std::invalid_argument("cosine_rows: zero candidate vector");
    out[k] = (u.array() * vk).sum() / (un * vn);
  }
  return make_op_tensor({K}, std::move(out), "cosine_rows", {u, v}, [K, d](TensorNode& self) {
    const Arr& uv = self.inputs[0]->value;
    const Arr& vv = self.inputs[1]->value;
    const double un = std::sqrt(uv.square().sum());
    Arr du = Arr::Zero(d);
    Arr dv = Arr::Zero(K * d);
    for (std::int64_t k = 0; k < K; ++k) {
      auto vk = vv.segment(k * d, d);
      const double vn = std::sqrt(vk.square().sum());
      const double y = self.value[k];
      const double g = self.grad[k];
      du += g * (vk / (un * vn) - y * uv / (un * un));
      dv.segment(k * d, d) = g * (uv / (un * vn) - y * vk / (vn * vn));
    }
    accumulate(*self.inputs[0], du);
    accumulate(*self.inputs[1], dv);
  });
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size() || u.empty()) {
    throw std::invalid_argument("cosine_similarity: vectors must be non-empty and of equal length");
  }
  double uu = 0.0, vv = 0.0, uv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uu += u[i] * u[i];
    vv += v[i] * v[i];
    uv += u[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw std::invalid_argument("cosine_similarity: zero vector");
  return uv / (std::sqrt(uu) * std::sqrt(vv));
}

}  // namespace stpt
