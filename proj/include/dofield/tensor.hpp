#pragma once

// Minimal dense-tensor engine with reverse-mode automatic differentiation.
// Tensors are rank-1/rank-2 row-major float buffers behind shared handles; a
// Tape records every operation in construction order (which is already
// topological) and replays the backward rules in reverse. The only broadcast
// supported is a row vector against the leading batch axis, which keeps every
// backward rule a few lines long and auditable. Matmul inner loops map the
// buffers into Eigen, everything else is a plain loop.
//
// The engine is templated on the scalar so the 32-bit training build and the
// 64-bit gradient-check build share one implementation.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dofield::ad {

using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out + "]";
}

namespace detail {
inline int g_matmul_threads = 1;
}

// Number of worker threads for the matmul kernels. Partitioning is static
// over disjoint output rows/columns, so results are bit-identical for every
// thread count.
inline int matmul_threads() { return detail::g_matmul_threads; }
inline void set_matmul_threads(int n) { detail::g_matmul_threads = std::max(1, n); }

namespace detail {

inline void parallel_rows(int rows, const std::function<void(int, int)>& fn) {
  const int threads = std::min(matmul_threads(), rows);
  if (threads <= 1 || rows < 128) {
    fn(0, rows);
    return;
  }
  std::vector<std::thread> pool;
  const int chunk = (rows + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int r0 = t * chunk;
    const int r1 = std::min(rows, r0 + chunk);
    if (r0 >= r1) break;
    pool.emplace_back(fn, r0, r1);
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

template <typename Real>
struct Node {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // allocated iff requires_grad
  bool requires_grad = false;
  bool is_leaf = true;

  void alloc_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), Real(0));
  }
};

// Shared handle to a node; cheap to copy, safe to keep across tapes (leaves
// hold parameters that persist between training steps).
template <typename Real>
class Tensor {
 public:
  Tensor() = default;

  static Tensor leaf(Shape shape, std::vector<Real> data, bool requires_grad = false) {
    if (numel(shape) != static_cast<std::int64_t>(data.size())) {
      throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
    }
    Tensor t;
    t.node_ = std::make_shared<Node<Real>>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    t.node_->requires_grad = requires_grad;
    if (requires_grad) t.node_->alloc_grad();
    return t;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<Real> data(static_cast<std::size_t>(numel(shape)), Real(0));
    return leaf(std::move(shape), std::move(data), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::int64_t size() const { return numel(node_->shape); }
  int rows() const { return node_->shape[0]; }
  int cols() const { return node_->shape.size() > 1 ? node_->shape[1] : 1; }

  std::vector<Real>& values() { return node_->value; }
  const std::vector<Real>& values() const { return node_->value; }
  Real value_at(std::int64_t i) const { return node_->value[i]; }
  Real scalar() const { return node_->value.at(0); }

  bool requires_grad() const { return node_->requires_grad; }
  std::vector<Real>& grads() { return node_->grad; }
  const std::vector<Real>& grads() const { return node_->grad; }
  void zero_grad() {
    if (node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), Real(0));
  }

  std::shared_ptr<Node<Real>> node() const { return node_; }

 private:
  std::shared_ptr<Node<Real>> node_;
};

template <typename Real>
class Tape {
 public:
  // grad_enabled=false gives a pure forward evaluator (no backward closures).
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  using T = Tensor<Real>;
  using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MapM = Eigen::Map<RowMat>;
  using CMapM = Eigen::Map<const RowMat>;

  // ---- primitives --------------------------------------------------------

  T matmul(const T& a, const T& b) {
    require(a.rank() == 2 && b.rank() == 2 && a.cols() == b.rows(), "matmul", a, b);
    const int n = a.rows(), m = a.cols(), p = b.cols();
    T out = make(Shape{n, p}, a, b);
    {
      CMapM A(a.values().data(), n, m), B(b.values().data(), m, p);
      MapM C(out.values().data(), n, p);
      detail::parallel_rows(n, [&](int r0, int r1) {
        C.middleRows(r0, r1 - r0).noalias() = A.middleRows(r0, r1 - r0) * B;
      });
    }
    if (out.requires_grad()) {
      record([a, b, out]() mutable {
        const int n = a.rows(), m = a.cols(), p = b.cols();
        CMapM A(a.values().data(), n, m), B(b.values().data(), m, p);
        CMapM dC(out.grads().data(), n, p);
        if (a.requires_grad()) {
          MapM dA(a.grads().data(), n, m);
          detail::parallel_rows(n, [&](int r0, int r1) {
            dA.middleRows(r0, r1 - r0).noalias() += dC.middleRows(r0, r1 - r0) * B.transpose();
          });
        }
        if (b.requires_grad()) {
          MapM dB(b.grads().data(), m, p);
          dB.noalias() += A.transpose() * dC;
        }
      });
    }
    return out;
  }

  // a + b. Shapes must match, or b may be a row vector [d] / [1xd] broadcast
  // over a's batch axis.
  T add(const T& a, const T& b) { return add_mul_impl(a, b, /*is_add=*/true); }

  // Elementwise a * b, same broadcast rule as add.
  T multiply(const T& a, const T& b) { return add_mul_impl(a, b, /*is_add=*/false); }

  T relu(const T& a) {
    T out = make(a.shape(), a);
    for (std::size_t i = 0; i < a.values().size(); ++i)
      out.values()[i] = a.values()[i] > Real(0) ? a.values()[i] : Real(0);
    if (out.requires_grad()) {
      record([a, out]() mutable {
        for (std::size_t i = 0; i < a.values().size(); ++i)
          if (a.values()[i] > Real(0)) a.grads()[i] += out.grads()[i];
      });
    }
    return out;
  }

  T exp(const T& a) {
    T out = make(a.shape(), a);
    for (std::size_t i = 0; i < a.values().size(); ++i) out.values()[i] = std::exp(a.values()[i]);
    if (out.requires_grad()) {
      record([a, out]() mutable {
        for (std::size_t i = 0; i < a.values().size(); ++i)
          a.grads()[i] += out.grads()[i] * out.values()[i];
      });
    }
    return out;
  }

  T negate(const T& a) { return scale_add(a, Real(-1), Real(0)); }

  // m*a + c, elementwise with scalar constants.
  T scale_add(const T& a, Real m, Real c) {
    T out = make(a.shape(), a);
    for (std::size_t i = 0; i < a.values().size(); ++i) out.values()[i] = m * a.values()[i] + c;
    if (out.requires_grad()) {
      record([a, out, m]() mutable {
        for (std::size_t i = 0; i < a.values().size(); ++i) a.grads()[i] += m * out.grads()[i];
      });
    }
    return out;
  }

  T concat_cols(const std::vector<T>& parts) {
    require_nonempty(parts);
    const int n = parts[0].rows();
    int total = 0;
    bool rg = false;
    for (const T& p : parts) {
      if (p.rank() != 2 || p.rows() != n) {
        throw std::invalid_argument("concat: parts must be rank-2 with equal row counts, got " +
                                    shape_str(p.shape()));
      }
      total += p.cols();
      rg = rg || p.requires_grad();
    }
    T out = make_raw(Shape{n, total}, rg);
    int col0 = 0;
    for (const T& p : parts) {
      const int d = p.cols();
      for (int r = 0; r < n; ++r) {
        std::copy_n(p.values().data() + std::size_t(r) * d, d,
                    out.values().data() + std::size_t(r) * total + col0);
      }
      col0 += d;
    }
    if (out.requires_grad()) {
      record([parts, out, total]() mutable {
        int col0 = 0;
        for (T& p : parts) {
          const int d = p.cols();
          if (p.requires_grad()) {
            for (int r = 0; r < p.rows(); ++r)
              for (int c = 0; c < d; ++c)
                p.grads()[std::size_t(r) * d + c] +=
                    out.grads()[std::size_t(r) * total + col0 + c];
          }
          col0 += d;
        }
      });
    }
    return out;
  }

  T slice_cols(const T& a, int begin, int count) {
    require(a.rank() == 2 && begin >= 0 && count > 0 && begin + count <= a.cols(), "slice", a, a);
    const int n = a.rows(), d = a.cols();
    T out = make(Shape{n, count}, a);
    for (int r = 0; r < n; ++r)
      std::copy_n(a.values().data() + std::size_t(r) * d + begin, count,
                  out.values().data() + std::size_t(r) * count);
    if (out.requires_grad()) {
      record([a, out, begin, count]() mutable {
        const int d = a.cols();
        for (int r = 0; r < a.rows(); ++r)
          for (int c = 0; c < count; ++c)
            a.grads()[std::size_t(r) * d + begin + c] += out.grads()[std::size_t(r) * count + c];
      });
    }
    return out;
  }

  T reshape(const T& a, Shape shape) {
    if (numel(shape) != a.size()) {
      throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " +
                                  shape_str(shape));
    }
    T out = make(std::move(shape), a);
    out.values() = a.values();
    if (out.requires_grad()) {
      record([a, out]() mutable {
        for (std::size_t i = 0; i < a.values().size(); ++i) a.grads()[i] += out.grads()[i];
      });
    }
    return out;
  }

  // Repeat a row vector [1xd] (or [d]) n times into [nxd].
  T tile_rows(const T& a, int n) {
    require(a.rows() == 1 || a.rank() == 1, "tile_rows", a, a);
    const int d = a.rank() == 1 ? a.rows() : a.cols();
    T out = make(Shape{n, d}, a);
    for (int r = 0; r < n; ++r)
      std::copy_n(a.values().data(), d, out.values().data() + std::size_t(r) * d);
    if (out.requires_grad()) {
      record([a, out, n, d]() mutable {
        for (int r = 0; r < n; ++r)
          for (int c = 0; c < d; ++c) a.grads()[c] += out.grads()[std::size_t(r) * d + c];
      });
    }
    return out;
  }

  T sum_all(const T& a) { return reduce_all(a, false); }
  T mean_all(const T& a) { return reduce_all(a, true); }

  // Row sums: [nxd] -> [n].
  T sum_cols(const T& a) {
    require(a.rank() == 2, "sum_cols", a, a);
    const int n = a.rows(), d = a.cols();
    T out = make(Shape{n}, a);
    for (int r = 0; r < n; ++r) {
      Real s = 0;
      for (int c = 0; c < d; ++c) s += a.values()[std::size_t(r) * d + c];
      out.values()[r] = s;
    }
    if (out.requires_grad()) {
      record([a, out]() mutable {
        const int d = a.cols();
        for (int r = 0; r < a.rows(); ++r)
          for (int c = 0; c < d; ++c) a.grads()[std::size_t(r) * d + c] += out.grads()[r];
      });
    }
    return out;
  }

  // Cumulative sum along the last axis.
  T cumsum_cols(const T& a) {
    require(a.rank() == 2, "cumsum_cols", a, a);
    const int n = a.rows(), d = a.cols();
    T out = make(a.shape(), a);
    for (int r = 0; r < n; ++r) {
      Real s = 0;
      for (int c = 0; c < d; ++c) {
        s += a.values()[std::size_t(r) * d + c];
        out.values()[std::size_t(r) * d + c] = s;
      }
    }
    if (out.requires_grad()) {
      // d/da[j] of out[j'] is 1 for j' >= j: reversed cumulative sum.
      record([a, out]() mutable {
        const int d = a.cols();
        for (int r = 0; r < a.rows(); ++r) {
          Real s = 0;
          for (int c = d - 1; c >= 0; --c) {
            s += out.grads()[std::size_t(r) * d + c];
            a.grads()[std::size_t(r) * d + c] += s;
          }
        }
      });
    }
    return out;
  }

  // Reductions to a scalar with the winning flat index reported; ties break
  // to the lowest index and the subgradient flows only there.
  T min_all(const T& a, std::int64_t* argindex = nullptr) { return extremum(a, true, argindex); }
  T max_all(const T& a, std::int64_t* argindex = nullptr) { return extremum(a, false, argindex); }

  // ---- backward ----------------------------------------------------------

  // Populates grad buffers of every requires_grad leaf reachable from loss.
  // Repeated calls accumulate into leaf gradients (intermediate grads are
  // reset on each call).
  void backward(const T& loss) {
    if (!grad_enabled_) throw std::logic_error("backward: tape was built with grad disabled");
    if (loss.size() != 1) {
      throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss.shape()));
    }
    for (auto& node : outputs_) {
      std::fill(node->grad.begin(), node->grad.end(), Real(0));
    }
    if (!loss.requires_grad()) return;  // disconnected from all parameters
    loss.node()->grad[0] += Real(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

  std::size_t size() const { return ops_.size(); }
  void clear() {
    ops_.clear();
    outputs_.clear();
  }

 private:
  T make_raw(Shape shape, bool rg) {
    T out = T::zeros(std::move(shape), false);
    out.node()->is_leaf = false;
    if (rg && grad_enabled_) {
      out.node()->requires_grad = true;
      out.node()->alloc_grad();
      outputs_.push_back(out.node());
    }
    return out;
  }

  T make(Shape shape, const T& a) { return make_raw(std::move(shape), a.requires_grad()); }
  T make(Shape shape, const T& a, const T& b) {
    return make_raw(std::move(shape), a.requires_grad() || b.requires_grad());
  }

  void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }

  void require(bool ok, const char* op, const T& a, const T& b) {
    if (!ok) {
      throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                                  shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
  }

  void require_nonempty(const std::vector<T>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  }

  T add_mul_impl(const T& a, const T& b, bool is_add) {
    const char* op = is_add ? "add" : "multiply";
    const bool same = a.shape() == b.shape();
    const bool bcast = a.rank() == 2 && b.size() == a.cols() && !same;
    require(same || bcast, op, a, b);
    T out = make(a.shape(), a, b);
    const int n = a.rows(), d = same ? 0 : a.cols();
    if (same) {
      for (std::size_t i = 0; i < a.values().size(); ++i)
        out.values()[i] = is_add ? a.values()[i] + b.values()[i] : a.values()[i] * b.values()[i];
    } else {
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) {
          const std::size_t i = std::size_t(r) * d + c;
          out.values()[i] = is_add ? a.values()[i] + b.values()[c] : a.values()[i] * b.values()[c];
        }
    }
    if (out.requires_grad()) {
      record([a, b, out, same, is_add]() mutable {
        const int n = a.rows(), d = a.cols();
        for (std::size_t i = 0; i < a.values().size(); ++i) {
          const Real g = out.grads()[i];
          const std::size_t bi = same ? i : i % std::size_t(d);
          if (a.requires_grad()) a.grads()[i] += is_add ? g : g * b.values()[bi];
          if (b.requires_grad()) b.grads()[bi] += is_add ? g : g * a.values()[i];
        }
        (void)n;
      });
    }
    return out;
  }

  T reduce_all(const T& a, bool mean) {
    T out = make(Shape{1}, a);
    Real s = 0;
    for (Real v : a.values()) s += v;
    const Real scale = mean ? Real(1) / Real(a.size()) : Real(1);
    out.values()[0] = s * scale;
    if (out.requires_grad()) {
      record([a, out, scale]() mutable {
        const Real g = out.grads()[0] * scale;
        for (std::size_t i = 0; i < a.values().size(); ++i) a.grads()[i] += g;
      });
    }
    return out;
  }

  T extremum(const T& a, bool is_min, std::int64_t* argindex) {
    if (a.size() == 0) throw std::invalid_argument("min/max: empty tensor");
    std::int64_t arg = 0;
    for (std::int64_t i = 1; i < a.size(); ++i) {
      const Real v = a.values()[i], best = a.values()[arg];
      if (is_min ? v < best : v > best) arg = i;  // strict: ties keep the lowest index
    }
    if (argindex) *argindex = arg;
    T out = make(Shape{1}, a);
    out.values()[0] = a.values()[arg];
    if (out.requires_grad()) {
      record([a, out, arg]() mutable { a.grads()[arg] += out.grads()[0]; });
    }
    return out;
  }

  bool grad_enabled_;
  std::vector<std::function<void()>> ops_;
  std::vector<std::shared_ptr<Node<Real>>> outputs_;
};

using Tensor32 = Tensor<float>;
using Tape32 = Tape<float>;

}  // namespace dofield::ad
