#pragma once

// Dense double-precision tensors with reverse-mode autodiff. Only the ops
// the parser needs; no broadcasting beyond row-vector bias adds, no views.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "graphre/errors.hpp"

namespace graphre {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ')';
  return os.str();
}

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until backward touches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backprop;  // pulls grad into parents

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false) {
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
      throw dimension_error("tensor: shape " + shape_str(shape) + " needs " +
                            std::to_string(shape_numel(shape)) +
                            " values, got " + std::to_string(values.size()));
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    impl->requires_grad = requires_grad;
    return Tensor(impl);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, v), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t size() const { return static_cast<std::int64_t>(impl_->data.size()); }
  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& data() const { return impl_->data; }
  bool requires_grad() const { return impl_->requires_grad; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::vector<double>& grad() { return impl_->grad; }
  const std::vector<double>& grad() const { return impl_->grad; }
  void zero_grad() { impl_->grad.clear(); }

  double value() const {
    if (size() != 1)
      throw usage_error("value(): tensor is not a scalar, shape " +
                        shape_str(shape()));
    return impl_->data[0];
  }

  int dim(int i) const { return impl_->shape[i]; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }

  std::shared_ptr<TensorImpl> impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

namespace detail {

inline Tensor make_node(Shape shape, std::vector<double> data,
                        std::vector<Tensor> parents,
                        std::function<void(TensorImpl&)> backprop) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  bool rg = false;
  for (const auto& p : parents) rg = rg || p.requires_grad();
  impl->requires_grad = rg;
  if (rg) {
    impl->parents.reserve(parents.size());
    for (auto& p : parents) impl->parents.push_back(p.impl());
    impl->backprop = std::move(backprop);
  }
  return Tensor(impl);
}

inline void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw dimension_error(std::string(op) + ": shape mismatch " +
                          shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---- arithmetic ----

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("add", a, b);
  std::vector<double> out(a.data());
  const auto& bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  auto ai = a.impl(), bi = b.impl();
  return detail::make_node(a.shape(), std::move(out), {a, b},
                           [ai, bi](TensorImpl& n) {
                             if (ai->requires_grad) {
                               ai->ensure_grad();
                               for (size_t i = 0; i < n.grad.size(); ++i)
                                 ai->grad[i] += n.grad[i];
                             }
                             if (bi->requires_grad) {
                               bi->ensure_grad();
                               for (size_t i = 0; i < n.grad.size(); ++i)
                                 bi->grad[i] += n.grad[i];
                             }
                           });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("sub", a, b);
  std::vector<double> out(a.data());
  const auto& bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  auto ai = a.impl(), bi = b.impl();
  return detail::make_node(a.shape(), std::move(out), {a, b},
                           [ai, bi](TensorImpl& n) {
                             if (ai->requires_grad) {
                               ai->ensure_grad();
                               for (size_t i = 0; i < n.grad.size(); ++i)
                                 ai->grad[i] += n.grad[i];
                             }
                             if (bi->requires_grad) {
                               bi->ensure_grad();
                               for (size_t i = 0; i < n.grad.size(); ++i)
                                 bi->grad[i] -= n.grad[i];
                             }
                           });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("mul", a, b);
  std::vector<double> out(a.data());
  const auto& bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
  auto ai = a.impl(), bi = b.impl();
  return detail::make_node(a.shape(), std::move(out), {a, b},
                           [ai, bi](TensorImpl& n) {
                             if (ai->requires_grad) {
                               ai->ensure_grad();
                               for (size_t i = 0; i < n.grad.size(); ++i)
                                 ai->grad[i] += n.grad[i] * bi->data[i];
                             }
                             if (bi->requires_grad) {
                               bi->ensure_grad();
                               for (size_t i = 0; i < n.grad.size(); ++i)
                                 bi->grad[i] += n.grad[i] * ai->data[i];
                             }
                           });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.data());
  for (auto& v : out) v *= s;
  auto ai = a.impl();
  return detail::make_node(a.shape(), std::move(out), {a},
                           [ai, s](TensorImpl& n) {
                             ai->ensure_grad();
                             for (size_t i = 0; i < n.grad.size(); ++i)
                               ai->grad[i] += n.grad[i] * s;
                           });
}

inline Tensor add_const(const Tensor& a, double c) {
  std::vector<double> out(a.data());
  for (auto& v : out) v += c;
  auto ai = a.impl();
  return detail::make_node(a.shape(), std::move(out), {a},
                           [ai](TensorImpl& n) {
                             ai->ensure_grad();
                             for (size_t i = 0; i < n.grad.size(); ++i)
                               ai->grad[i] += n.grad[i];
                           });
}

// (n x m) + row vector of length m, broadcast over rows
inline Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  if (m.rank() != 2 || v.rank() != 1 || m.dim(1) != v.dim(0))
    throw dimension_error("add_rowvec: shape mismatch " + shape_str(m.shape()) +
                          " vs " + shape_str(v.shape()));
  int rows = m.dim(0), cols = m.dim(1);
  std::vector<double> out(m.data());
  const auto& vd = v.data();
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out[static_cast<size_t>(i) * cols + j] += vd[j];
  auto mi = m.impl(), vi = v.impl();
  return detail::make_node(
      m.shape(), std::move(out), {m, v}, [mi, vi, rows, cols](TensorImpl& n) {
        if (mi->requires_grad) {
          mi->ensure_grad();
          for (size_t i = 0; i < n.grad.size(); ++i) mi->grad[i] += n.grad[i];
        }
        if (vi->requires_grad) {
          vi->ensure_grad();
          for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j)
              vi->grad[j] += n.grad[static_cast<size_t>(i) * cols + j];
        }
      });
}

inline Tensor add_n(const std::vector<Tensor>& ts) {
  if (ts.empty()) throw usage_error("add_n: empty input");
  Tensor acc = ts[0];
  for (size_t i = 1; i < ts.size(); ++i) acc = add(acc, ts[i]);
  return acc;
}

// ---- matmul / transpose ----

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw dimension_error("matmul: shape mismatch " + shape_str(a.shape()) +
                          " vs " + shape_str(b.shape()));
  const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
  std::vector<double> out(static_cast<size_t>(n) * m, 0.0);
  const auto& ad = a.data();
  const auto& bd = b.data();
  for (int i = 0; i < n; ++i) {
    const double* arow = ad.data() + static_cast<size_t>(i) * k;
    double* orow = out.data() + static_cast<size_t>(i) * m;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = bd.data() + static_cast<size_t>(kk) * m;
      for (int j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  auto ai = a.impl(), bi = b.impl();
  return detail::make_node(
      {n, m}, std::move(out), {a, b}, [ai, bi, n, k, m](TensorImpl& node) {
        const auto& g = node.grad;
        if (ai->requires_grad) {  // dA = G B^T
          ai->ensure_grad();
          for (int i = 0; i < n; ++i) {
            const double* grow = g.data() + static_cast<size_t>(i) * m;
            double* arow = ai->grad.data() + static_cast<size_t>(i) * k;
            for (int kk = 0; kk < k; ++kk) {
              const double* brow = bi->data.data() + static_cast<size_t>(kk) * m;
              double acc = 0.0;
              for (int j = 0; j < m; ++j) acc += grow[j] * brow[j];
              arow[kk] += acc;
            }
          }
        }
        if (bi->requires_grad) {  // dB = A^T G
          bi->ensure_grad();
          for (int i = 0; i < n; ++i) {
            const double* arow = ai->data.data() + static_cast<size_t>(i) * k;
            const double* grow = g.data() + static_cast<size_t>(i) * m;
            for (int kk = 0; kk < k; ++kk) {
              const double av = arow[kk];
              if (av == 0.0) continue;
              double* brow = bi->grad.data() + static_cast<size_t>(kk) * m;
              for (int j = 0; j < m; ++j) brow[j] += av * grow[j];
            }
          }
        }
      });
}

inline Tensor transpose(const Tensor& a) {
  if (a.rank() != 2)
    throw dimension_error("transpose: expected rank-2, got " +
                          shape_str(a.shape()));
  const int n = a.dim(0), m = a.dim(1);
  std::vector<double> out(a.data().size());
  const auto& ad = a.data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      out[static_cast<size_t>(j) * n + i] = ad[static_cast<size_t>(i) * m + j];
  auto ai = a.impl();
  return detail::make_node({m, n}, std::move(out), {a},
                           [ai, n, m](TensorImpl& node) {
                             ai->ensure_grad();
                             for (int i = 0; i < n; ++i)
                               for (int j = 0; j < m; ++j)
                                 ai->grad[static_cast<size_t>(i) * m + j] +=
                                     node.grad[static_cast<size_t>(j) * n + i];
                           });
}

// ---- shape surgery ----

inline Tensor concat(const std::vector<Tensor>& ts, int axis) {
  if (ts.empty()) throw usage_error("concat: empty input");
  const int rank = ts[0].rank();
  if (rank == 1) {
    if (axis != 0) throw dimension_error("concat: rank-1 tensors take axis 0");
    int total = 0;
    for (const auto& t : ts) {
      if (t.rank() != 1)
        throw dimension_error("concat: mixed ranks");
      total += t.dim(0);
    }
    std::vector<double> out;
    out.reserve(total);
    for (const auto& t : ts) out.insert(out.end(), t.data().begin(), t.data().end());
    std::vector<std::shared_ptr<TensorImpl>> impls;
    for (const auto& t : ts) impls.push_back(t.impl());
    return detail::make_node({total}, std::move(out), ts,
                             [impls](TensorImpl& node) {
                               size_t off = 0;
                               for (auto& p : impls) {
                                 if (p->requires_grad) {
                                   p->ensure_grad();
                                   for (size_t i = 0; i < p->data.size(); ++i)
                                     p->grad[i] += node.grad[off + i];
                                 }
                                 off += p->data.size();
                               }
                             });
  }
  if (rank != 2 || (axis != 0 && axis != 1))
    throw dimension_error("concat: supported on rank-1/2 only, axis 0/1");
  if (axis == 0) {
    const int cols = ts[0].dim(1);
    int rows = 0;
    for (const auto& t : ts) {
      if (t.rank() != 2 || t.dim(1) != cols)
        throw dimension_error("concat axis 0: column mismatch " +
                              shape_str(ts[0].shape()) + " vs " +
                              shape_str(t.shape()));
      rows += t.dim(0);
    }
    std::vector<double> out;
    out.reserve(static_cast<size_t>(rows) * cols);
    for (const auto& t : ts) out.insert(out.end(), t.data().begin(), t.data().end());
    std::vector<std::shared_ptr<TensorImpl>> impls;
    for (const auto& t : ts) impls.push_back(t.impl());
    return detail::make_node({rows, cols}, std::move(out), ts,
                             [impls](TensorImpl& node) {
                               size_t off = 0;
                               for (auto& p : impls) {
                                 if (p->requires_grad) {
                                   p->ensure_grad();
                                   for (size_t i = 0; i < p->data.size(); ++i)
                                     p->grad[i] += node.grad[off + i];
                                 }
                                 off += p->data.size();
                               }
                             });
  }
  // axis == 1
  const int rows = ts[0].dim(0);
  int cols = 0;
  for (const auto& t : ts) {
    if (t.rank() != 2 || t.dim(0) != rows)
      throw dimension_error("concat axis 1: row mismatch " +
                            shape_str(ts[0].shape()) + " vs " +
                            shape_str(t.shape()));
    cols += t.dim(1);
  }
  std::vector<double> out(static_cast<size_t>(rows) * cols);
  int coff = 0;
  for (const auto& t : ts) {
    const int tc = t.dim(1);
    for (int i = 0; i < rows; ++i)
      std::copy_n(t.data().data() + static_cast<size_t>(i) * tc, tc,
                  out.data() + static_cast<size_t>(i) * cols + coff);
    coff += tc;
  }
  std::vector<std::shared_ptr<TensorImpl>> impls;
  std::vector<int> widths;
  for (const auto& t : ts) {
    impls.push_back(t.impl());
    widths.push_back(t.dim(1));
  }
  return detail::make_node(
      {rows, cols}, std::move(out), ts,
      [impls, widths, rows, cols](TensorImpl& node) {
        int off = 0;
        for (size_t p = 0; p < impls.size(); ++p) {
          const int w = widths[p];
          if (impls[p]->requires_grad) {
            impls[p]->ensure_grad();
            for (int i = 0; i < rows; ++i)
              for (int j = 0; j < w; ++j)
                impls[p]->grad[static_cast<size_t>(i) * w + j] +=
                    node.grad[static_cast<size_t>(i) * cols + off + j];
          }
          off += w;
        }
      });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.size())
    throw dimension_error("reshape: cannot view " + shape_str(a.shape()) +
                          " as " + shape_str(shape));
  auto ai = a.impl();
  return detail::make_node(std::move(shape), a.data(), {a},
                           [ai](TensorImpl& node) {
                             ai->ensure_grad();
                             for (size_t i = 0; i < node.grad.size(); ++i)
                               ai->grad[i] += node.grad[i];
                           });
}

inline Tensor cols_slice(const Tensor& a, int begin, int end) {
  if (a.rank() != 2 || begin < 0 || end > a.dim(1) || begin >= end)
    throw dimension_error("cols_slice: bad range [" + std::to_string(begin) +
                          "," + std::to_string(end) + ") for " +
                          shape_str(a.shape()));
  const int rows = a.dim(0), cols = a.dim(1), w = end - begin;
  std::vector<double> out(static_cast<size_t>(rows) * w);
  for (int i = 0; i < rows; ++i)
    std::copy_n(a.data().data() + static_cast<size_t>(i) * cols + begin, w,
                out.data() + static_cast<size_t>(i) * w);
  auto ai = a.impl();
  return detail::make_node({rows, w}, std::move(out), {a},
                           [ai, begin, rows, cols, w](TensorImpl& node) {
                             ai->ensure_grad();
                             for (int i = 0; i < rows; ++i)
                               for (int j = 0; j < w; ++j)
                                 ai->grad[static_cast<size_t>(i) * cols + begin + j] +=
                                     node.grad[static_cast<size_t>(i) * w + j];
                           });
}

inline Tensor rows_gather(const Tensor& a, const std::vector<int>& idx) {
  if (a.rank() != 2) throw dimension_error("rows_gather: expected rank-2");
  const int rows = a.dim(0), cols = a.dim(1);
  for (int i : idx)
    if (i < 0 || i >= rows)
      throw dimension_error("rows_gather: index " + std::to_string(i) +
                            " out of range for " + shape_str(a.shape()));
  std::vector<double> out(idx.size() * static_cast<size_t>(cols));
  for (size_t r = 0; r < idx.size(); ++r)
    std::copy_n(a.data().data() + static_cast<size_t>(idx[r]) * cols, cols,
                out.data() + r * cols);
  auto ai = a.impl();
  return detail::make_node({static_cast<int>(idx.size()), cols}, std::move(out),
                           {a}, [ai, idx, cols](TensorImpl& node) {
                             ai->ensure_grad();
                             for (size_t r = 0; r < idx.size(); ++r)
                               for (int j = 0; j < cols; ++j)
                                 ai->grad[static_cast<size_t>(idx[r]) * cols + j] +=
                                     node.grad[r * cols + j];
                           });
}

// gather scalar entries by flat index -> rank-1
inline Tensor pick(const Tensor& a, const std::vector<std::int64_t>& idx) {
  for (auto i : idx)
    if (i < 0 || i >= a.size())
      throw dimension_error("pick: flat index " + std::to_string(i) +
                            " out of range for " + shape_str(a.shape()));
  std::vector<double> out(idx.size());
  for (size_t k = 0; k < idx.size(); ++k) out[k] = a.data()[idx[k]];
  auto ai = a.impl();
  return detail::make_node({static_cast<int>(idx.size())}, std::move(out), {a},
                           [ai, idx](TensorImpl& node) {
                             ai->ensure_grad();
                             for (size_t k = 0; k < idx.size(); ++k)
                               ai->grad[idx[k]] += node.grad[k];
                           });
}

// stack R same-shape (n x m) matrices into (n x m x R)
inline Tensor stack_last(const std::vector<Tensor>& ts) {
  if (ts.empty()) throw usage_error("stack_last: empty input");
  const int n = ts[0].dim(0), m = ts[0].dim(1);
  const int R = static_cast<int>(ts.size());
  for (const auto& t : ts) detail::check_same_shape("stack_last", ts[0], t);
  std::vector<double> out(static_cast<size_t>(n) * m * R);
  for (int r = 0; r < R; ++r) {
    const auto& td = ts[r].data();
    for (int ij = 0; ij < n * m; ++ij)
      out[static_cast<size_t>(ij) * R + r] = td[ij];
  }
  std::vector<std::shared_ptr<TensorImpl>> impls;
  for (const auto& t : ts) impls.push_back(t.impl());
  return detail::make_node({n, m, R}, std::move(out), ts,
                           [impls, n, m, R](TensorImpl& node) {
                             for (int r = 0; r < R; ++r) {
                               if (!impls[r]->requires_grad) continue;
                               impls[r]->ensure_grad();
                               for (int ij = 0; ij < n * m; ++ij)
                                 impls[r]->grad[ij] +=
                                     node.grad[static_cast<size_t>(ij) * R + r];
                             }
                           });
}

// ---- nonlinearities ----

namespace detail {
template <class Fwd, class Dfn>
Tensor unary(const char* /*name*/, const Tensor& a, Fwd f, Dfn df) {
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(a.data()[i]);
  auto ai = a.impl();
  return make_node(a.shape(), std::move(out), {a}, [ai, df](TensorImpl& n) {
    ai->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i)
      ai->grad[i] += n.grad[i] * df(ai->data[i], n.data[i]);
  });
}
}  // namespace detail

inline Tensor leaky_relu(const Tensor& a, double slope = 0.01) {
  return detail::unary(
      "leaky_relu", a, [slope](double x) { return x > 0 ? x : slope * x; },
      [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

inline Tensor elu(const Tensor& a) {
  return detail::unary(
      "elu", a, [](double x) { return x > 0 ? x : std::expm1(x); },
      [](double x, double y) { return x > 0 ? 1.0 : y + 1.0; });
}

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary(
      "sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh_t(const Tensor& a) {
  return detail::unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

// ---- softmax over the last axis ----

namespace detail {
inline std::pair<int, int> last_axis_view(const Tensor& a) {
  const auto& s = a.shape();
  if (s.empty()) throw dimension_error("softmax: rank-0 tensor");
  int m = s.back();
  int rows = 1;
  for (size_t i = 0; i + 1 < s.size(); ++i) rows *= s[i];
  return {rows, m};
}
}  // namespace detail

inline Tensor softmax_last(const Tensor& a) {
  auto [rows, m] = detail::last_axis_view(a);
  std::vector<double> out(a.data().size());
  const auto& ad = a.data();
  for (int r = 0; r < rows; ++r) {
    const double* x = ad.data() + static_cast<size_t>(r) * m;
    double* y = out.data() + static_cast<size_t>(r) * m;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) mx = std::max(mx, x[j]);
    if (!(mx > -std::numeric_limits<double>::infinity()))
      throw numeric_error("softmax: all entries are -inf in a row");
    double sum = 0.0;
    for (int j = 0; j < m; ++j) {
      y[j] = std::exp(x[j] - mx);
      sum += y[j];
    }
    for (int j = 0; j < m; ++j) y[j] /= sum;
  }
  auto ai = a.impl();
  int rows_c = rows, m_c = m;
  return detail::make_node(
      a.shape(), std::move(out), {a}, [ai, rows_c, m_c](TensorImpl& n) {
        ai->ensure_grad();
        for (int r = 0; r < rows_c; ++r) {
          const double* y = n.data.data() + static_cast<size_t>(r) * m_c;
          const double* g = n.grad.data() + static_cast<size_t>(r) * m_c;
          double dot = 0.0;
          for (int j = 0; j < m_c; ++j) dot += g[j] * y[j];
          double* dx = ai->grad.data() + static_cast<size_t>(r) * m_c;
          for (int j = 0; j < m_c; ++j) dx[j] += y[j] * (g[j] - dot);
        }
      });
}

inline Tensor log_softmax_last(const Tensor& a) {
  auto [rows, m] = detail::last_axis_view(a);
  std::vector<double> out(a.data().size());
  const auto& ad = a.data();
  for (int r = 0; r < rows; ++r) {
    const double* x = ad.data() + static_cast<size_t>(r) * m;
    double* y = out.data() + static_cast<size_t>(r) * m;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) mx = std::max(mx, x[j]);
    if (!(mx > -std::numeric_limits<double>::infinity()))
      throw numeric_error("log_softmax: all entries are -inf in a row");
    double sum = 0.0;
    for (int j = 0; j < m; ++j) sum += std::exp(x[j] - mx);
    const double lse = mx + std::log(sum);
    for (int j = 0; j < m; ++j) y[j] = x[j] - lse;
  }
  auto ai = a.impl();
  int rows_c = rows, m_c = m;
  return detail::make_node(
      a.shape(), std::move(out), {a}, [ai, rows_c, m_c](TensorImpl& n) {
        ai->ensure_grad();
        for (int r = 0; r < rows_c; ++r) {
          const double* y = n.data.data() + static_cast<size_t>(r) * m_c;
          const double* g = n.grad.data() + static_cast<size_t>(r) * m_c;
          double gsum = 0.0;
          for (int j = 0; j < m_c; ++j) gsum += g[j];
          double* dx = ai->grad.data() + static_cast<size_t>(r) * m_c;
          for (int j = 0; j < m_c; ++j) dx[j] += g[j] - std::exp(y[j]) * gsum;
        }
      });
}

// ---- reductions ----

inline Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  auto ai = a.impl();
  return detail::make_node({1}, {s}, {a}, [ai](TensorImpl& n) {
    ai->ensure_grad();
    for (auto& g : ai->grad) g += n.grad[0];
  });
}

inline Tensor mean_all(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.size());
  double s = 0.0;
  for (double v : a.data()) s += v;
  auto ai = a.impl();
  return detail::make_node({1}, {s * inv}, {a}, [ai, inv](TensorImpl& n) {
    ai->ensure_grad();
    for (auto& g : ai->grad) g += n.grad[0] * inv;
  });
}

// ---- masking / stop-gradient ----

// entries where mask != 0 are replaced by `value` and receive zero gradient
inline Tensor masked_fill(const Tensor& a, const std::vector<char>& mask,
                          double value) {
  if (static_cast<std::int64_t>(mask.size()) != a.size())
    throw dimension_error("masked_fill: mask size " +
                          std::to_string(mask.size()) + " vs tensor " +
                          shape_str(a.shape()));
  std::vector<double> out(a.data());
  for (size_t i = 0; i < out.size(); ++i)
    if (mask[i]) out[i] = value;
  auto ai = a.impl();
  return detail::make_node(a.shape(), std::move(out), {a},
                           [ai, mask](TensorImpl& n) {
                             ai->ensure_grad();
                             for (size_t i = 0; i < n.grad.size(); ++i)
                               if (!mask[i]) ai->grad[i] += n.grad[i];
                           });
}

// argmax over the last axis; non-differentiable by construction
inline std::vector<int> argmax_last(const Tensor& a) {
  auto [rows, m] = detail::last_axis_view(a);
  std::vector<int> out(rows);
  const auto& ad = a.data();
  for (int r = 0; r < rows; ++r) {
    const double* x = ad.data() + static_cast<size_t>(r) * m;
    int best = 0;
    for (int j = 1; j < m; ++j)
      if (x[j] > x[best]) best = j;  // ties -> lowest index
    out[r] = best;
  }
  return out;
}

// constant one-hot rows; carries no gradient
inline Tensor one_hot(const std::vector<int>& idx, int depth) {
  std::vector<double> out(idx.size() * static_cast<size_t>(depth), 0.0);
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= depth)
      throw dimension_error("one_hot: index " + std::to_string(idx[i]) +
                            " out of range [0," + std::to_string(depth) + ")");
    out[i * depth + idx[i]] = 1.0;
  }
  return Tensor::from({static_cast<int>(idx.size()), depth}, std::move(out));
}

// ---- layer norm (per row, learnable gain/bias) ----

inline Tensor layer_norm(const Tensor& x, const Tensor& gain,
                         const Tensor& bias, double eps = 1e-5) {
  if (x.rank() != 2 || gain.rank() != 1 || bias.rank() != 1 ||
      gain.dim(0) != x.dim(1) || bias.dim(0) != x.dim(1))
    throw dimension_error("layer_norm: shape mismatch " + shape_str(x.shape()) +
                          " gain " + shape_str(gain.shape()));
  const int n = x.dim(0), d = x.dim(1);
  std::vector<double> out(static_cast<size_t>(n) * d);
  std::vector<double> mu(n), istd(n);
  const auto& xd = x.data();
  for (int i = 0; i < n; ++i) {
    const double* row = xd.data() + static_cast<size_t>(i) * d;
    double m = 0.0;
    for (int j = 0; j < d; ++j) m += row[j];
    m /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (row[j] - m) * (row[j] - m);
    var /= d;
    mu[i] = m;
    istd[i] = 1.0 / std::sqrt(var + eps);
    double* orow = out.data() + static_cast<size_t>(i) * d;
    for (int j = 0; j < d; ++j)
      orow[j] = (row[j] - m) * istd[i] * gain.data()[j] + bias.data()[j];
  }
  auto xi = x.impl(), gi = gain.impl(), bi = bias.impl();
  return detail::make_node(
      x.shape(), std::move(out), {x, gain, bias},
      [xi, gi, bi, n, d, mu, istd](TensorImpl& node) {
        for (int i = 0; i < n; ++i) {
          const double* row = xi->data.data() + static_cast<size_t>(i) * d;
          const double* g = node.grad.data() + static_cast<size_t>(i) * d;
          // xhat_j = (x_j - mu) * istd
          if (gi->requires_grad) {
            gi->ensure_grad();
            for (int j = 0; j < d; ++j)
              gi->grad[j] += g[j] * (row[j] - mu[i]) * istd[i];
          }
          if (bi->requires_grad) {
            bi->ensure_grad();
            for (int j = 0; j < d; ++j) bi->grad[j] += g[j];
          }
          if (xi->requires_grad) {
            xi->ensure_grad();
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (int j = 0; j < d; ++j) {
              const double dxhat = g[j] * gi->data[j];
              const double xhat = (row[j] - mu[i]) * istd[i];
              sum_dxhat += dxhat;
              sum_dxhat_xhat += dxhat * xhat;
            }
            double* dx = xi->grad.data() + static_cast<size_t>(i) * d;
            for (int j = 0; j < d; ++j) {
              const double dxhat = g[j] * gi->data[j];
              const double xhat = (row[j] - mu[i]) * istd[i];
              dx[j] += istd[i] *
                       (dxhat - sum_dxhat / d - xhat * sum_dxhat_xhat / d);
            }
          }
        }
      });
}

// ---- backward ----

inline void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw usage_error("backward: loss must be scalar, got shape " +
                      shape_str(loss.shape()));
  if (!loss.requires_grad()) return;  // nothing reaches a parameter

  // iterative post-order topo sort
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  std::vector<std::pair<TensorImpl*, size_t>> stack;
  stack.emplace_back(loss.impl().get(), 0);
  visited.insert(loss.impl().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorImpl* p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.impl()->ensure_grad();
  loss.impl()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    if (node->backprop && !node->grad.empty()) node->backprop(*node);
  }
}

// ---- finite-difference gradient check ----
//
// f evaluates a scalar that reads x's current contents (parameters captured
// by the closure are perturbed in place). Returns the max over coordinates of
// |analytic - central| / max(1, |central|), all in double precision.
template <class F>
double finite_diff_check(F&& f, Tensor& x, double eps = 1e-5) {
  if (!(eps > 0.0) || eps > 1e-2)
    throw usage_error("finite_diff_check: eps must be in (0, 1e-2]");
  x.zero_grad();
  Tensor y = f(x);
  if (y.size() != 1)
    throw usage_error("finite_diff_check: f must return a scalar");
  if (!std::isfinite(y.value()))
    throw numeric_error("finite_diff_check: f(x) is not finite");
  backward(y);
  std::vector<double> analytic = x.has_grad()
                                     ? x.grad()
                                     : std::vector<double>(x.size(), 0.0);
  double worst = 0.0;
  auto& xd = x.data();
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const double keep = xd[i];
    xd[i] = keep + eps;
    const double yp = f(x).value();
    xd[i] = keep - eps;
    const double ym = f(x).value();
    xd[i] = keep;
    const double central = (yp - ym) / (2.0 * eps);
    const double err = std::abs(analytic[i] - central) /
                       std::max(1.0, std::abs(central));
    worst = std::max(worst, err);
  }
  x.zero_grad();
  return worst;
}

}  // namespace graphre
