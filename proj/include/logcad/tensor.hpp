#pragma once

// Dense tensors with a tape-based reverse-mode gradient graph.
//
// A Tensor is a cheap handle to shared storage. Parameters are created with
// requires_grad = true and outlive any single Graph; every primitive applied
// through a recording Graph appends one backward closure to its tape, and
// Graph::backward replays the tape in reverse exactly once per op.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "logcad/random.hpp"

namespace logcad {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

class ShapeError : public std::invalid_argument {
 public:
  ShapeError(std::string_view op, const Shape& a, const Shape& b)
      : std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_string(a) +
                              " and " + shape_string(b)) {}
  ShapeError(std::string_view op, const std::string& detail)
      : std::invalid_argument(std::string(op) + ": " + detail) {}
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (shape_size(shape) != values.size()) {
      throw ShapeError("tensor", "shape " + shape_string(shape) + " does not hold " +
                                     std::to_string(values.size()) + " values");
    }
    return Tensor(std::move(shape), std::move(values), requires_grad);
  }

  static Tensor vector(std::initializer_list<T> values, bool requires_grad = false) {
    return from({values.size()}, std::vector<T>(values), requires_grad);
  }

  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng, bool requires_grad = false) {
    std::vector<T> values(shape_size(shape));
    for (auto& v : values) v = static_cast<T>(rng.uniform(lo, hi));
    return Tensor(std::move(shape), std::move(values), requires_grad);
  }

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const { return data_->shape; }
  std::size_t rank() const { return data_->shape.size(); }
  std::size_t size() const { return data_->values.size(); }
  std::size_t dim(std::size_t axis) const { return data_->shape.at(axis); }
  bool requires_grad() const { return data_->requires_grad; }

  // Handle semantics: a const Tensor still refers to mutable storage.
  std::span<T> values() const { return data_->values; }
  std::span<T> grad() const { return data_->grad; }

  T& operator[](std::size_t i) { return data_->values[i]; }
  const T& operator[](std::size_t i) const { return data_->values[i]; }
  T& at(std::size_t r, std::size_t c) { return data_->values[r * data_->shape[1] + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data_->values[r * data_->shape[1] + c]; }

  T item() const {
    if (size() != 1) throw ShapeError("item", "tensor " + shape_string(shape()) + " is not scalar");
    return data_->values[0];
  }

  void zero_grad() { std::fill(data_->grad.begin(), data_->grad.end(), T(0)); }

  // Identity of the underlying storage, not value equality.
  bool same_storage(const Tensor& other) const { return data_ == other.data_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;
    bool requires_grad = false;
  };

  Tensor(Shape shape, std::vector<T> values, bool requires_grad)
      : data_(std::make_shared<Storage>()) {
    data_->shape = std::move(shape);
    data_->values = std::move(values);
    data_->requires_grad = requires_grad;
    if (requires_grad) data_->grad.assign(data_->values.size(), T(0));
  }

  std::shared_ptr<Storage> data_;
};

// Records primitive ops in execution order. A non-recording graph evaluates
// the same primitives without building a tape (inference).
template <typename T>
class Graph {
 public:
  using TensorT = Tensor<T>;

  explicit Graph(bool record = true) : record_(record) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }
  std::size_t num_ops() const { return tape_.size(); }

  // ---- linear algebra -----------------------------------------------------

  // (m,k)x(k,n) -> (m,n); (m,k)x(k) -> (m); (k)x(k,n) -> (n)
  TensorT matmul(const TensorT& a, const TensorT& b) {
    if (a.rank() == 2 && b.rank() == 2) {
      const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
      if (b.dim(0) != k) throw ShapeError("matmul", a.shape(), b.shape());
      auto out = make({m, n}, {a, b});
      auto A = a.values();
      auto B = b.values();
      auto C = out.values();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const T av = A[i * k + p];
          const T* brow = &B[p * n];
          T* crow = &C[i * n];
          for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
      record("matmul", out, [a, b, out, m, k, n]() mutable {
        auto G = out.grad();
        if (a.requires_grad()) {
          auto dA = a.grad();
          auto Bv = b.values();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              T acc = 0;
              for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * Bv[p * n + j];
              dA[i * k + p] += acc;
            }
        }
        if (b.requires_grad()) {
          auto dB = b.grad();
          auto Av = a.values();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const T av = Av[i * k + p];
              for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += av * G[i * n + j];
            }
        }
      });
      return out;
    }
    if (a.rank() == 2 && b.rank() == 1) {
      const std::size_t m = a.dim(0), k = a.dim(1);
      if (b.dim(0) != k) throw ShapeError("matmul", a.shape(), b.shape());
      auto out = make({m}, {a, b});
      auto A = a.values();
      auto x = b.values();
      auto y = out.values();
      for (std::size_t i = 0; i < m; ++i) {
        const T* arow = &A[i * k];
        T acc = 0;
        for (std::size_t p = 0; p < k; ++p) acc += arow[p] * x[p];
        y[i] = acc;
      }
      record("matmul", out, [a, b, out, m, k]() mutable {
        auto g = out.grad();
        if (a.requires_grad()) {
          auto dA = a.grad();
          auto xv = b.values();
          for (std::size_t i = 0; i < m; ++i) {
            const T gi = g[i];
            T* drow = &dA[i * k];
            for (std::size_t p = 0; p < k; ++p) drow[p] += gi * xv[p];
          }
        }
        if (b.requires_grad()) {
          auto dx = b.grad();
          auto Av = a.values();
          for (std::size_t i = 0; i < m; ++i) {
            const T gi = g[i];
            const T* arow = &Av[i * k];
            for (std::size_t p = 0; p < k; ++p) dx[p] += arow[p] * gi;
          }
        }
      });
      return out;
    }
    if (a.rank() == 1 && b.rank() == 2) {
      const std::size_t k = a.dim(0), n = b.dim(1);
      if (b.dim(0) != k) throw ShapeError("matmul", a.shape(), b.shape());
      auto out = make({n}, {a, b});
      auto x = a.values();
      auto B = b.values();
      auto y = out.values();
      for (std::size_t p = 0; p < k; ++p) {
        const T xv = x[p];
        const T* brow = &B[p * n];
        for (std::size_t j = 0; j < n; ++j) y[j] += xv * brow[j];
      }
      record("matmul", out, [a, b, out, k, n]() mutable {
        auto g = out.grad();
        if (a.requires_grad()) {
          auto dx = a.grad();
          auto Bv = b.values();
          for (std::size_t p = 0; p < k; ++p) {
            T acc = 0;
            for (std::size_t j = 0; j < n; ++j) acc += Bv[p * n + j] * g[j];
            dx[p] += acc;
          }
        }
        if (b.requires_grad()) {
          auto dB = b.grad();
          auto xv = a.values();
          for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += xv[p] * g[j];
        }
      });
      return out;
    }
    throw ShapeError("matmul", a.shape(), b.shape());
  }

  TensorT transpose(const TensorT& a) {
    if (a.rank() != 2) throw ShapeError("transpose", "expects a matrix, got " + shape_string(a.shape()));
    const std::size_t m = a.dim(0), n = a.dim(1);
    auto out = make({n, m}, {a});
    auto src = a.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
    record("transpose", out, [a, out, m, n]() mutable {
      auto g = out.grad();
      auto d = a.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) d[i * n + j] += g[j * m + i];
    });
    return out;
  }

  // ---- elementwise --------------------------------------------------------

  // Same-shape add, or (m,n) + (n) broadcast over rows.
  TensorT add(const TensorT& a, const TensorT& b) {
    if (a.shape() == b.shape()) {
      auto out = make(a.shape(), {a, b});
      auto y = out.values();
      auto av = a.values();
      auto bv = b.values();
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
      record("add", out, [a, b, out]() mutable {
        accumulate(a, out.grad());
        accumulate(b, out.grad());
      });
      return out;
    }
    if (a.rank() == 2 && b.rank() == 1 && a.dim(1) == b.dim(0)) {
      const std::size_t m = a.dim(0), n = a.dim(1);
      auto out = make(a.shape(), {a, b});
      auto y = out.values();
      auto av = a.values();
      auto bv = b.values();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) y[i * n + j] = av[i * n + j] + bv[j];
      record("add", out, [a, b, out, m, n]() mutable {
        accumulate(a, out.grad());
        if (b.requires_grad()) {
          auto g = out.grad();
          auto d = b.grad();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) d[j] += g[i * n + j];
        }
      });
      return out;
    }
    throw ShapeError("add", a.shape(), b.shape());
  }

  TensorT sub(const TensorT& a, const TensorT& b) {
    if (a.shape() != b.shape()) throw ShapeError("sub", a.shape(), b.shape());
    auto out = make(a.shape(), {a, b});
    auto y = out.values();
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
    record("sub", out, [a, b, out]() mutable {
      accumulate(a, out.grad());
      if (b.requires_grad()) {
        auto g = out.grad();
        auto d = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
      }
    });
    return out;
  }

  TensorT mul(const TensorT& a, const TensorT& b) {
    if (a.shape() != b.shape()) throw ShapeError("mul", a.shape(), b.shape());
    auto out = make(a.shape(), {a, b});
    auto y = out.values();
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
    record("mul", out, [a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto d = a.grad();
        auto bv2 = b.values();
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * bv2[i];
      }
      if (b.requires_grad()) {
        auto d = b.grad();
        auto av2 = a.values();
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * av2[i];
      }
    });
    return out;
  }

  // alpha * a + beta
  TensorT affine(const TensorT& a, T alpha, T beta = T(0)) {
    auto out = make(a.shape(), {a});
    auto y = out.values();
    auto av = a.values();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = alpha * av[i] + beta;
    record("affine", out, [a, out, alpha]() mutable {
      if (!a.requires_grad()) return;
      auto g = out.grad();
      auto d = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += alpha * g[i];
    });
    return out;
  }

  TensorT sigmoid(const TensorT& a) {
    auto out = make(a.shape(), {a});
    auto y = out.values();
    auto av = a.values();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = stable_sigmoid(av[i]);
    record("sigmoid", out, [a, out]() mutable {
      if (!a.requires_grad()) return;
      auto g = out.grad();
      auto yv = out.values();
      auto d = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * yv[i] * (T(1) - yv[i]);
    });
    return out;
  }

  TensorT tanh(const TensorT& a) {
    auto out = make(a.shape(), {a});
    auto y = out.values();
    auto av = a.values();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(av[i]);
    record("tanh", out, [a, out]() mutable {
      if (!a.requires_grad()) return;
      auto g = out.grad();
      auto yv = out.values();
      auto d = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * (T(1) - yv[i] * yv[i]);
    });
    return out;
  }

  // Inverted dropout: keeps each unit with probability 1-p and scales kept
  // units by 1/(1-p). Identity when p == 0 or rng is null (evaluation).
  TensorT dropout(const TensorT& a, double p, Rng* rng) {
    if (rng == nullptr || p <= 0.0) return a;
    if (p >= 1.0) throw ShapeError("dropout", "rate must be < 1");
    std::vector<T> mask(a.size());
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    for (auto& m : mask) m = rng->bernoulli(p) ? T(0) : keep_scale;
    return apply_mask(a, TensorT::from(a.shape(), std::move(mask)));
  }

  TensorT apply_mask(const TensorT& a, const TensorT& mask) {
    if (mask.requires_grad()) throw ShapeError("apply_mask", "mask must be a constant");
    return mul(a, mask);
  }

  // ---- reductions and normalisation --------------------------------------

  TensorT sum(const TensorT& a) {
    auto out = make({1}, {a});
    auto av = a.values();
    T acc = 0;
    for (auto v : av) acc += v;
    out[0] = acc;
    record("sum", out, [a, out]() mutable {
      if (!a.requires_grad()) return;
      const T g = out.grad()[0];
      for (auto& d : a.grad()) d += g;
    });
    return out;
  }

  // Softmax along `axis`; max-subtracted.
  TensorT softmax(const TensorT& a, std::size_t axis = 0) {
    auto [outer, len, inner] = axis_layout("softmax", a, axis);
    auto out = make(a.shape(), {a});
    auto x = a.values();
    auto y = out.values();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, x[base + i * inner]);
        T z = 0;
        for (std::size_t i = 0; i < len; ++i) {
          y[base + i * inner] = std::exp(x[base + i * inner] - mx);
          z += y[base + i * inner];
        }
        for (std::size_t i = 0; i < len; ++i) y[base + i * inner] /= z;
      }
    record("softmax", out, [a, out, outer, len, inner]() mutable {
      if (!a.requires_grad()) return;
      auto g = out.grad();
      auto yv = out.values();
      auto d = a.grad();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * len * inner + in;
          T dot = 0;
          for (std::size_t i = 0; i < len; ++i) dot += g[base + i * inner] * yv[base + i * inner];
          for (std::size_t i = 0; i < len; ++i)
            d[base + i * inner] += yv[base + i * inner] * (g[base + i * inner] - dot);
        }
    });
    return out;
  }

  TensorT log_softmax(const TensorT& a) {
    if (a.rank() != 1) throw ShapeError("log_softmax", "expects a vector, got " + shape_string(a.shape()));
    auto out = make(a.shape(), {a});
    auto x = a.values();
    auto y = out.values();
    const T mx = *std::max_element(x.begin(), x.end());
    T z = 0;
    for (auto v : x) z += std::exp(v - mx);
    const T log_z = mx + std::log(z);
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] - log_z;
    record("log_softmax", out, [a, out]() mutable {
      if (!a.requires_grad()) return;
      auto g = out.grad();
      auto yv = out.values();
      auto d = a.grad();
      T gsum = 0;
      for (auto v : g) gsum += v;
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] - std::exp(yv[i]) * gsum;
    });
    return out;
  }

  // Max over `axis` of a matrix (result is a vector) or over a whole vector.
  TensorT max(const TensorT& a, std::size_t axis = 0) {
    auto [outer, len, inner] = axis_layout("max", a, axis);
    Shape shape = reduced_shape(a.shape(), axis);
    auto out = make(shape, {a});
    auto x = a.values();
    auto y = out.values();
    std::vector<std::size_t> argmax(outer * inner);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        std::size_t best = base;
        for (std::size_t i = 1; i < len; ++i)
          if (x[base + i * inner] > x[best]) best = base + i * inner;
        y[o * inner + in] = x[best];
        argmax[o * inner + in] = best;
      }
    record("max", out, [a, out, argmax = std::move(argmax)]() mutable {
      if (!a.requires_grad()) return;
      auto g = out.grad();
      auto d = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) d[argmax[i]] += g[i];
    });
    return out;
  }

  TensorT mean(const TensorT& a, std::size_t axis = 0) {
    auto [outer, len, inner] = axis_layout("mean", a, axis);
    Shape shape = reduced_shape(a.shape(), axis);
    auto out = make(shape, {a});
    auto x = a.values();
    auto y = out.values();
    const T inv = T(1) / static_cast<T>(len);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        T acc = 0;
        for (std::size_t i = 0; i < len; ++i) acc += x[o * len * inner + i * inner + in];
        y[o * inner + in] = acc * inv;
      }
    record("mean", out, [a, out, outer, len, inner, inv]() mutable {
      if (!a.requires_grad()) return;
      auto g = out.grad();
      auto d = a.grad();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in)
          for (std::size_t i = 0; i < len; ++i) d[o * len * inner + i * inner + in] += g[o * inner + in] * inv;
    });
    return out;
  }

  // ---- structural ---------------------------------------------------------

  TensorT concat(std::span<const TensorT> parts) {
    if (parts.empty()) throw ShapeError("concat", "no inputs");
    std::size_t n = 0;
    for (const auto& p : parts) {
      if (p.rank() != 1) throw ShapeError("concat", parts.front().shape(), p.shape());
      n += p.size();
    }
    std::vector<TensorT> inputs(parts.begin(), parts.end());
    auto out = make({n}, inputs);
    auto y = out.values();
    std::size_t offset = 0;
    for (const auto& p : parts) {
      std::copy(p.values().begin(), p.values().end(), y.begin() + static_cast<std::ptrdiff_t>(offset));
      offset += p.size();
    }
    record("concat", out, [inputs = std::move(inputs), out]() mutable {
      auto g = out.grad();
      std::size_t off = 0;
      for (auto& p : inputs) {
        if (p.requires_grad()) {
          auto d = p.grad();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[off + i];
        }
        off += p.size();
      }
    });
    return out;
  }

  TensorT concat(std::initializer_list<TensorT> parts) {
    return concat(std::span<const TensorT>(parts.begin(), parts.size()));
  }

  // Vector slice [begin, end).
  TensorT slice(const TensorT& a, std::size_t begin, std::size_t end) {
    if (a.rank() != 1 || begin >= end || end > a.size())
      throw ShapeError("slice", "range [" + std::to_string(begin) + "," + std::to_string(end) +
                                    ") of " + shape_string(a.shape()));
    auto out = make({end - begin}, {a});
    std::copy(a.values().begin() + static_cast<std::ptrdiff_t>(begin),
              a.values().begin() + static_cast<std::ptrdiff_t>(end), out.values().begin());
    record("slice", out, [a, out, begin]() mutable {
      if (!a.requires_grad()) return;
      auto g = out.grad();
      auto d = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) d[begin + i] += g[i];
    });
    return out;
  }

  // Row i of a matrix (embedding lookup).
  TensorT row(const TensorT& a, std::size_t i) {
    if (a.rank() != 2 || i >= a.dim(0))
      throw ShapeError("row", "row " + std::to_string(i) + " of " + shape_string(a.shape()));
    const std::size_t n = a.dim(1);
    auto out = make({n}, {a});
    std::copy_n(a.values().begin() + static_cast<std::ptrdiff_t>(i * n), n, out.values().begin());
    record("row", out, [a, out, i, n]() mutable {
      if (!a.requires_grad()) return;
      auto g = out.grad();
      auto d = a.grad();
      for (std::size_t j = 0; j < n; ++j) d[i * n + j] += g[j];
    });
    return out;
  }

  // Stack equal-width vectors as the rows of a matrix.
  TensorT stack(std::span<const TensorT> rows) {
    if (rows.empty()) throw ShapeError("stack", "no inputs");
    const std::size_t n = rows.front().size();
    for (const auto& r : rows)
      if (r.rank() != 1 || r.size() != n) throw ShapeError("stack", rows.front().shape(), r.shape());
    std::vector<TensorT> inputs(rows.begin(), rows.end());
    auto out = make({rows.size(), n}, inputs);
    auto y = out.values();
    for (std::size_t i = 0; i < rows.size(); ++i)
      std::copy(rows[i].values().begin(), rows[i].values().end(), y.begin() + static_cast<std::ptrdiff_t>(i * n));
    record("stack", out, [inputs = std::move(inputs), out, n]() mutable {
      auto g = out.grad();
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (!inputs[i].requires_grad()) continue;
        auto d = inputs[i].grad();
        for (std::size_t j = 0; j < n; ++j) d[j] += g[i * n + j];
      }
    });
    return out;
  }

  // Element i of a vector as a scalar.
  TensorT pick(const TensorT& a, std::size_t i) {
    if (a.rank() != 1 || i >= a.size())
      throw ShapeError("pick", "index " + std::to_string(i) + " of " + shape_string(a.shape()));
    auto out = make({1}, {a});
    out[0] = a[i];
    record("pick", out, [a, out, i]() mutable {
      if (a.requires_grad()) a.grad()[i] += out.grad()[0];
    });
    return out;
  }

  // ---- gradients ----------------------------------------------------------

  void backward(const TensorT& loss) {
    if (!loss.defined() || loss.size() != 1)
      throw ShapeError("backward", "loss must be scalar, got " +
                                       (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
    if (!loss.requires_grad()) throw ShapeError("backward", "loss is not connected to any parameter");
    auto seed = loss;
    seed.grad()[0] += T(1);
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) it->backward();
    tape_.clear();
  }

 private:
  struct Op {
    std::string_view kind;
    std::function<void()> backward;
  };

  static T stable_sigmoid(T x) {
    if (x >= 0) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
  }

  static void accumulate(const TensorT& target, std::span<const T> g) {
    if (!target.requires_grad()) return;
    auto d = target.grad();
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
  }

  struct AxisLayout {
    std::size_t outer, len, inner;
  };

  static AxisLayout axis_layout(std::string_view op, const TensorT& a, std::size_t axis) {
    if (a.rank() == 0 || a.rank() > 2 || axis >= a.rank())
      throw ShapeError(op, "axis " + std::to_string(axis) + " invalid for " + shape_string(a.shape()));
    if (a.rank() == 1) return {1, a.dim(0), 1};
    return axis == 0 ? AxisLayout{1, a.dim(0), a.dim(1)} : AxisLayout{a.dim(0), a.dim(1), 1};
  }

  static Shape reduced_shape(const Shape& shape, std::size_t axis) {
    if (shape.size() == 1) return {1};
    return {shape[1 - axis]};
  }

  TensorT make(Shape shape, std::initializer_list<TensorT> inputs) {
    bool needs = false;
    for (const auto& t : inputs) needs = needs || t.requires_grad();
    return TensorT::zeros(std::move(shape), record_ && needs);
  }

  TensorT make(Shape shape, const std::vector<TensorT>& inputs) {
    bool needs = false;
    for (const auto& t : inputs) needs = needs || t.requires_grad();
    return TensorT::zeros(std::move(shape), record_ && needs);
  }

  template <typename F>
  void record(std::string_view kind, const TensorT& out, F&& fn) {
    if (out.requires_grad()) tape_.push_back(Op{kind, std::forward<F>(fn)});
  }

  bool record_;
  std::vector<Op> tape_;
};

// Max over checked coordinates of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8),
// using central differences of step eps. `f` builds a scalar loss on the graph it is given.
// `coords[k]` lists the coordinates of `inputs[k]` to check; empty means all of them.
template <typename T, typename F>
double gradient_check(F&& f, std::span<Tensor<T>> inputs, double eps,
                      std::span<const std::vector<std::size_t>> coords = {}) {
  if (eps <= 0) throw std::invalid_argument("gradient_check: eps must be positive");
  for (auto& x : inputs) x.zero_grad();
  std::vector<std::vector<T>> analytic;
  {
    Graph<T> g;
    Tensor<T> loss = f(g);
    if (loss.size() != 1) throw ShapeError("gradient_check", "function is not scalar-valued");
    g.backward(loss);
    for (auto& x : inputs) analytic.emplace_back(x.grad().begin(), x.grad().end());
  }
  auto evaluate = [&] {
    Graph<T> g(false);
    return static_cast<double>(f(g).item());
  };
  double worst = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& x = inputs[k];
    std::vector<std::size_t> all;
    std::span<const std::size_t> which;
    if (k < coords.size() && !coords[k].empty()) {
      which = coords[k];
    } else {
      all.resize(x.size());
      std::iota(all.begin(), all.end(), std::size_t{0});
      which = all;
    }
    for (const std::size_t i : which) {
      const T saved = x[i];
      x[i] = static_cast<T>(saved + eps);
      const double plus = evaluate();
      x[i] = static_cast<T>(saved - eps);
      const double minus = evaluate();
      x[i] = saved;
      const double numeric = (plus - minus) / (2 * eps);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

template <typename T, typename F>
double gradient_check(F&& f, Tensor<T>& x, double eps) {
  return gradient_check<T>(std::forward<F>(f), std::span<Tensor<T>>(&x, 1), eps);
}

}  // namespace logcad
