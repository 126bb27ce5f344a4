#pragma once

#include <cmath>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "choreo/common.hpp"

namespace choreo::ag {

// A 2-D array of doubles with an optional gradient buffer. All tensors in the
// project are rank 2; scalars are [1,1] and vectors are [1,n] or [n,1].
struct TensorImpl {
    int rows = 0;
    int cols = 0;
    std::vector<double> val;
    std::vector<double> grad;  // allocated lazily, same size as val
    bool requires_grad = false;

    void ensure_grad() {
        if (grad.size() != val.size()) grad.assign(val.size(), 0.0);
    }
};

class Graph;

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(int rows, int cols, bool requires_grad = false) {
        Tensor t;
        t.impl_ = std::make_shared<TensorImpl>();
        t.impl_->rows = rows;
        t.impl_->cols = cols;
        t.impl_->val.assign(static_cast<size_t>(rows) * cols, 0.0);
        t.impl_->requires_grad = requires_grad;
        return t;
    }

    static Tensor full(int rows, int cols, double value, bool requires_grad = false) {
        Tensor t = zeros(rows, cols, requires_grad);
        for (auto& v : t.values()) v = value;
        return t;
    }

    static Tensor from(int rows, int cols, std::vector<double> data,
                       bool requires_grad = false) {
        if (static_cast<size_t>(rows) * cols != data.size())
            throw ShapeMismatch("tensor data length does not match shape");
        Tensor t;
        t.impl_ = std::make_shared<TensorImpl>();
        t.impl_->rows = rows;
        t.impl_->cols = cols;
        t.impl_->val = std::move(data);
        t.impl_->requires_grad = requires_grad;
        return t;
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return from(1, 1, {v}, requires_grad);
    }

    bool defined() const { return static_cast<bool>(impl_); }
    int rows() const { return impl_->rows; }
    int cols() const { return impl_->cols; }
    size_t size() const { return impl_->val.size(); }
    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool b) { impl_->requires_grad = b; }

    std::vector<double>& values() { return impl_->val; }
    const std::vector<double>& values() const { return impl_->val; }
    std::vector<double>& grads() {
        impl_->ensure_grad();
        return impl_->grad;
    }

    double at(int i, int j) const { return impl_->val[static_cast<size_t>(i) * cols() + j]; }
    double& at(int i, int j) { return impl_->val[static_cast<size_t>(i) * cols() + j]; }

    double item() const {
        if (size() != 1) throw ShapeMismatch("item() on non-scalar tensor");
        return impl_->val[0];
    }

    void zero_grad() {
        if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
    }

    // Detached copy of the values (no grad, no recording).
    Tensor detach() const { return from(rows(), cols(), impl_->val, false); }

    std::shared_ptr<TensorImpl> impl_;
};

// Records ops in execution order; backward replays them once in reverse.
// Single-owner: make one per forward/backward pass.
class Graph {
public:
    Graph() : prev_(current_) { current_ = this; }
    ~Graph() { current_ = prev_; }
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    static Graph* current() { return current_; }

    void record(std::function<void()> backward) { nodes_.push_back(std::move(backward)); }

    size_t node_count() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

    void backward(const Tensor& loss) {
        if (consumed_) throw GraphConsumed("backward already ran on this graph");
        if (loss.size() != 1) throw ShapeMismatch("backward expects a scalar loss");
        consumed_ = true;
        loss.impl_->ensure_grad();
        loss.impl_->grad[0] += 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    }

private:
    std::vector<std::function<void()>> nodes_;
    bool consumed_ = false;
    Graph* prev_ = nullptr;
    static inline thread_local Graph* current_ = nullptr;
};

namespace detail {

inline bool tracing(std::initializer_list<const Tensor*> inputs) {
    if (!Graph::current()) return false;
    for (const Tensor* t : inputs)
        if (t->defined() && t->requires_grad()) return true;
    return false;
}

inline void record(Tensor& out, std::initializer_list<const Tensor*> inputs,
                   std::function<void()> backward) {
    out.impl_->requires_grad = true;
    out.impl_->ensure_grad();
    for (const Tensor* t : inputs)
        if (t->defined() && t->requires_grad()) t->impl_->ensure_grad();
    Graph::current()->record(std::move(backward));
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeMismatch(std::string(op) + ": " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                            "x" + std::to_string(b.cols()));
}

}  // namespace detail

// ---- elementwise binary ----

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "add");
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    for (size_t i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] + b.values()[i];
    if (detail::tracing({&a, &b})) {
        detail::record(out, {&a, &b}, [a = a.impl_, b = b.impl_, o = out.impl_] {
            if (a->requires_grad)
                for (size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i];
            if (b->requires_grad)
                for (size_t i = 0; i < o->grad.size(); ++i) b->grad[i] += o->grad[i];
        });
    }
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "sub");
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    for (size_t i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] - b.values()[i];
    if (detail::tracing({&a, &b})) {
        detail::record(out, {&a, &b}, [a = a.impl_, b = b.impl_, o = out.impl_] {
            if (a->requires_grad)
                for (size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i];
            if (b->requires_grad)
                for (size_t i = 0; i < o->grad.size(); ++i) b->grad[i] -= o->grad[i];
        });
    }
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "mul");
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    for (size_t i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] * b.values()[i];
    if (detail::tracing({&a, &b})) {
        detail::record(out, {&a, &b}, [a = a.impl_, b = b.impl_, o = out.impl_] {
            if (a->requires_grad)
                for (size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i] * b->val[i];
            if (b->requires_grad)
                for (size_t i = 0; i < o->grad.size(); ++i) b->grad[i] += o->grad[i] * a->val[i];
        });
    }
    return out;
}

// elementwise max; ties route the gradient to a
inline Tensor max_elem(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "max_elem");
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    for (size_t i = 0; i < a.size(); ++i)
        out.values()[i] = a.values()[i] >= b.values()[i] ? a.values()[i] : b.values()[i];
    if (detail::tracing({&a, &b})) {
        detail::record(out, {&a, &b}, [a = a.impl_, b = b.impl_, o = out.impl_] {
            for (size_t i = 0; i < o->grad.size(); ++i) {
                if (a->val[i] >= b->val[i]) {
                    if (a->requires_grad) a->grad[i] += o->grad[i];
                } else if (b->requires_grad) {
                    b->grad[i] += o->grad[i];
                }
            }
        });
    }
    return out;
}

inline Tensor div(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "div");
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    for (size_t i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] / b.values()[i];
    if (detail::tracing({&a, &b})) {
        detail::record(out, {&a, &b}, [a = a.impl_, b = b.impl_, o = out.impl_] {
            for (size_t i = 0; i < o->grad.size(); ++i) {
                const double inv = 1.0 / b->val[i];
                if (a->requires_grad) a->grad[i] += o->grad[i] * inv;
                if (b->requires_grad) b->grad[i] -= o->grad[i] * a->val[i] * inv * inv;
            }
        });
    }
    return out;
}

// ---- elementwise unary / affine ----

inline Tensor affine(const Tensor& a, double scale, double shift) {
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    for (size_t i = 0; i < a.size(); ++i) out.values()[i] = scale * a.values()[i] + shift;
    if (detail::tracing({&a})) {
        detail::record(out, {&a}, [a = a.impl_, o = out.impl_, scale] {
            for (size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i] * scale;
        });
    }
    return out;
}

inline Tensor neg(const Tensor& a) { return affine(a, -1.0, 0.0); }

namespace detail {

template <typename F, typename DF>
Tensor unary(const Tensor& a, F f, DF df_from_xy) {
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    for (size_t i = 0; i < a.size(); ++i) out.values()[i] = f(a.values()[i]);
    if (tracing({&a})) {
        record(out, {&a}, [a = a.impl_, o = out.impl_, df_from_xy] {
            for (size_t i = 0; i < o->grad.size(); ++i)
                a->grad[i] += o->grad[i] * df_from_xy(a->val[i], o->val[i]);
        });
    }
    return out;
}

}  // namespace detail

inline Tensor exp(const Tensor& a) {
    return detail::unary(a, [](double x) { return std::exp(x); },
                         [](double, double y) { return y; });
}

inline Tensor log(const Tensor& a) {
    return detail::unary(a, [](double x) { return std::log(x); },
                         [](double x, double) { return 1.0 / x; });
}

inline Tensor sqrt(const Tensor& a) {
    return detail::unary(a, [](double x) { return std::sqrt(x); },
                         [](double, double y) { return 0.5 / y; });
}

inline Tensor recip(const Tensor& a) {
    return detail::unary(a, [](double x) { return 1.0 / x; },
                         [](double, double y) { return -y * y; });
}

inline Tensor sigmoid(const Tensor& a) {
    return detail::unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                         [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh(const Tensor& a) {
    return detail::unary(a, [](double x) { return std::tanh(x); },
                         [](double, double y) { return 1.0 - y * y; });
}

inline Tensor relu(const Tensor& a) {
    return detail::unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                         [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor gelu(const Tensor& a) {
    // exact gelu: x * Phi(x)
    return detail::unary(
        a,
        [](double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); },
        [](double x, double) {
            const double phi = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
            const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
            return phi + x * pdf;
        });
}

inline Tensor clamp(const Tensor& a, double lo, double hi) {
    return detail::unary(a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
                         [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

inline Tensor square(const Tensor& a) { return mul(a, a); }

// ---- linear algebra ----

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) throw ShapeMismatch("matmul inner dims");
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out = Tensor::zeros(m, n);
    const double* av = a.values().data();
    const double* bv = b.values().data();
    double* ov = out.values().data();
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = bv + p * n;
            double* orow = ov + i * n;
            for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    if (detail::tracing({&a, &b})) {
        detail::record(out, {&a, &b}, [a = a.impl_, b = b.impl_, o = out.impl_, m, k, n] {
            if (a->requires_grad) {
                // dA = dO * B^T
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) {
                        const double g = o->grad[i * n + j];
                        if (g == 0.0) continue;
                        for (int p = 0; p < k; ++p) a->grad[i * k + p] += g * b->val[p * n + j];
                    }
            }
            if (b->requires_grad) {
                // dB = A^T * dO
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        const double av_ = a->val[i * k + p];
                        if (av_ == 0.0) continue;
                        for (int j = 0; j < n; ++j) b->grad[p * n + j] += av_ * o->grad[i * n + j];
                    }
            }
        });
    }
    return out;
}

inline Tensor transpose(const Tensor& a) {
    const int m = a.rows(), n = a.cols();
    Tensor out = Tensor::zeros(n, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
    if (detail::tracing({&a})) {
        detail::record(out, {&a}, [a = a.impl_, o = out.impl_, m, n] {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) a->grad[i * n + j] += o->grad[j * m + i];
        });
    }
    return out;
}

// ---- reductions ----

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    Tensor out = Tensor::scalar(s);
    if (detail::tracing({&a})) {
        detail::record(out, {&a}, [a = a.impl_, o = out.impl_] {
            for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += o->grad[0];
        });
    }
    return out;
}

inline Tensor mean(const Tensor& a) {
    const double inv = 1.0 / static_cast<double>(a.size());
    double s = 0.0;
    for (double v : a.values()) s += v;
    Tensor out = Tensor::scalar(s * inv);
    if (detail::tracing({&a})) {
        detail::record(out, {&a}, [a = a.impl_, o = out.impl_, inv] {
            for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += o->grad[0] * inv;
        });
    }
    return out;
}

inline Tensor row_sum(const Tensor& a) {
    const int m = a.rows(), n = a.cols();
    Tensor out = Tensor::zeros(m, 1);
    for (int i = 0; i < m; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += a.at(i, j);
        out.at(i, 0) = s;
    }
    if (detail::tracing({&a})) {
        detail::record(out, {&a}, [a = a.impl_, o = out.impl_, m, n] {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) a->grad[i * n + j] += o->grad[i];
        });
    }
    return out;
}

inline Tensor rowdot(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "rowdot");
    return row_sum(mul(a, b));
}

// ---- broadcasting ----

// y[i,j] = x[i,j] * s[i,0]
inline Tensor mul_rowwise(const Tensor& x, const Tensor& s) {
    if (s.rows() != x.rows() || s.cols() != 1) throw ShapeMismatch("mul_rowwise scale");
    const int m = x.rows(), n = x.cols();
    Tensor out = Tensor::zeros(m, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(i, j) = x.at(i, j) * s.at(i, 0);
    if (detail::tracing({&x, &s})) {
        detail::record(out, {&x, &s}, [x = x.impl_, s = s.impl_, o = out.impl_, m, n] {
            for (int i = 0; i < m; ++i) {
                const double sv = s->val[i];
                for (int j = 0; j < n; ++j) {
                    const double g = o->grad[i * n + j];
                    if (x->requires_grad) x->grad[i * n + j] += g * sv;
                    if (s->requires_grad) s->grad[i] += g * x->val[i * n + j];
                }
            }
        });
    }
    return out;
}

// y[i,j] = x[i,j] * v[0,j]
inline Tensor mul_rowvec(const Tensor& x, const Tensor& v) {
    if (v.rows() != 1 || v.cols() != x.cols()) throw ShapeMismatch("mul_rowvec vector");
    const int m = x.rows(), n = x.cols();
    Tensor out = Tensor::zeros(m, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(i, j) = x.at(i, j) * v.at(0, j);
    if (detail::tracing({&x, &v})) {
        detail::record(out, {&x, &v}, [x = x.impl_, v = v.impl_, o = out.impl_, m, n] {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    const double g = o->grad[i * n + j];
                    if (x->requires_grad) x->grad[i * n + j] += g * v->val[j];
                    if (v->requires_grad) v->grad[j] += g * x->val[i * n + j];
                }
        });
    }
    return out;
}

// y[i,j] = x[i,j] + v[0,j]
inline Tensor add_rowvec(const Tensor& x, const Tensor& v) {
    if (v.rows() != 1 || v.cols() != x.cols()) throw ShapeMismatch("add_rowvec vector");
    const int m = x.rows(), n = x.cols();
    Tensor out = Tensor::zeros(m, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(i, j) = x.at(i, j) + v.at(0, j);
    if (detail::tracing({&x, &v})) {
        detail::record(out, {&x, &v}, [x = x.impl_, v = v.impl_, o = out.impl_, m, n] {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    const double g = o->grad[i * n + j];
                    if (x->requires_grad) x->grad[i * n + j] += g;
                    if (v->requires_grad) v->grad[j] += g;
                }
        });
    }
    return out;
}

// y[i,j] = x[i,j] * s[0,0]  (scalar-tensor broadcast)
inline Tensor mul_scalar(const Tensor& x, const Tensor& s) {
    if (s.size() != 1) throw ShapeMismatch("mul_scalar expects scalar");
    const int m = x.rows(), n = x.cols();
    Tensor out = Tensor::zeros(m, n);
    const double sv = s.values()[0];
    for (size_t i = 0; i < x.size(); ++i) out.values()[i] = x.values()[i] * sv;
    if (detail::tracing({&x, &s})) {
        detail::record(out, {&x, &s}, [x = x.impl_, s = s.impl_, o = out.impl_] {
            const double sv = s->val[0];
            for (size_t i = 0; i < o->grad.size(); ++i) {
                if (x->requires_grad) x->grad[i] += o->grad[i] * sv;
                if (s->requires_grad) s->grad[0] += o->grad[i] * x->val[i];
            }
        });
    }
    return out;
}

// ---- structure ----

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) throw ShapeMismatch("concat_cols rows");
    const int m = a.rows(), na = a.cols(), nb = b.cols();
    Tensor out = Tensor::zeros(m, na + nb);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < na; ++j) out.at(i, j) = a.at(i, j);
        for (int j = 0; j < nb; ++j) out.at(i, na + j) = b.at(i, j);
    }
    if (detail::tracing({&a, &b})) {
        detail::record(out, {&a, &b}, [a = a.impl_, b = b.impl_, o = out.impl_, m, na, nb] {
            for (int i = 0; i < m; ++i) {
                if (a->requires_grad)
                    for (int j = 0; j < na; ++j) a->grad[i * na + j] += o->grad[i * (na + nb) + j];
                if (b->requires_grad)
                    for (int j = 0; j < nb; ++j)
                        b->grad[i * nb + j] += o->grad[i * (na + nb) + na + j];
            }
        });
    }
    return out;
}

inline Tensor concat_rows(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) throw ShapeMismatch("concat_rows cols");
    const int n = a.cols(), ma = a.rows(), mb = b.rows();
    Tensor out = Tensor::zeros(ma + mb, n);
    std::copy(a.values().begin(), a.values().end(), out.values().begin());
    std::copy(b.values().begin(), b.values().end(), out.values().begin() + a.size());
    if (detail::tracing({&a, &b})) {
        detail::record(out, {&a, &b}, [a = a.impl_, b = b.impl_, o = out.impl_] {
            if (a->requires_grad)
                for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += o->grad[i];
            if (b->requires_grad)
                for (size_t i = 0; i < b->grad.size(); ++i)
                    b->grad[i] += o->grad[a->val.size() + i];
        });
    }
    return out;
}

inline Tensor slice_cols(const Tensor& a, int start, int len) {
    if (start < 0 || len < 0 || start + len > a.cols()) throw ShapeMismatch("slice_cols range");
    const int m = a.rows(), n = a.cols();
    Tensor out = Tensor::zeros(m, len);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < len; ++j) out.at(i, j) = a.at(i, start + j);
    if (detail::tracing({&a})) {
        detail::record(out, {&a}, [a = a.impl_, o = out.impl_, m, n, start, len] {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < len; ++j) a->grad[i * n + start + j] += o->grad[i * len + j];
        });
    }
    return out;
}

inline Tensor slice_rows(const Tensor& a, int start, int len) {
    if (start < 0 || len < 0 || start + len > a.rows()) throw ShapeMismatch("slice_rows range");
    const int n = a.cols();
    Tensor out = Tensor::zeros(len, n);
    std::copy(a.values().begin() + static_cast<size_t>(start) * n,
              a.values().begin() + static_cast<size_t>(start + len) * n, out.values().begin());
    if (detail::tracing({&a})) {
        detail::record(out, {&a}, [a = a.impl_, o = out.impl_, n, start, len] {
            for (size_t i = 0; i < static_cast<size_t>(len) * n; ++i)
                a->grad[static_cast<size_t>(start) * n + i] += o->grad[i];
        });
    }
    return out;
}

inline Tensor reshape(const Tensor& a, int rows, int cols) {
    if (static_cast<size_t>(rows) * cols != a.size()) throw ShapeMismatch("reshape size");
    Tensor out = Tensor::from(rows, cols, a.values());
    if (detail::tracing({&a})) {
        detail::record(out, {&a}, [a = a.impl_, o = out.impl_] {
            for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += o->grad[i];
        });
    }
    return out;
}

// ---- row-wise nonlinear primitives ----

inline Tensor softmax_rows(const Tensor& x) {
    const int m = x.rows(), n = x.cols();
    Tensor out = Tensor::zeros(m, n);
    for (int i = 0; i < m; ++i) {
        double mx = x.at(i, 0);
        for (int j = 1; j < n; ++j) mx = std::max(mx, x.at(i, j));
        double z = 0.0;
        for (int j = 0; j < n; ++j) z += std::exp(x.at(i, j) - mx);
        for (int j = 0; j < n; ++j) out.at(i, j) = std::exp(x.at(i, j) - mx) / z;
    }
    if (detail::tracing({&x})) {
        detail::record(out, {&x}, [x = x.impl_, o = out.impl_, m, n] {
            for (int i = 0; i < m; ++i) {
                double dot = 0.0;
                for (int j = 0; j < n; ++j) dot += o->grad[i * n + j] * o->val[i * n + j];
                for (int j = 0; j < n; ++j)
                    x->grad[i * n + j] += o->val[i * n + j] * (o->grad[i * n + j] - dot);
            }
        });
    }
    return out;
}

inline Tensor logsumexp_rows(const Tensor& x) {
    const int m = x.rows(), n = x.cols();
    Tensor out = Tensor::zeros(m, 1);
    for (int i = 0; i < m; ++i) {
        double mx = x.at(i, 0);
        for (int j = 1; j < n; ++j) mx = std::max(mx, x.at(i, j));
        double z = 0.0;
        for (int j = 0; j < n; ++j) z += std::exp(x.at(i, j) - mx);
        out.at(i, 0) = mx + std::log(z);
    }
    if (detail::tracing({&x})) {
        detail::record(out, {&x}, [x = x.impl_, o = out.impl_, m, n] {
            for (int i = 0; i < m; ++i) {
                const double lse = o->val[i];
                for (int j = 0; j < n; ++j)
                    x->grad[i * n + j] += o->grad[i] * std::exp(x->val[i * n + j] - lse);
            }
        });
    }
    return out;
}

// LayerNorm over the last axis, without affine terms (wrap with
// mul_rowvec/add_rowvec for learned gain and bias).
inline Tensor layer_norm_rows(const Tensor& x, double eps = 1e-5) {
    const int m = x.rows(), n = x.cols();
    Tensor out = Tensor::zeros(m, n);
    std::vector<double> inv_std(m), mu(m);
    for (int i = 0; i < m; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += x.at(i, j);
        mu[i] = s / n;
        double v = 0.0;
        for (int j = 0; j < n; ++j) {
            const double d = x.at(i, j) - mu[i];
            v += d * d;
        }
        inv_std[i] = 1.0 / std::sqrt(v / n + eps);
        for (int j = 0; j < n; ++j) out.at(i, j) = (x.at(i, j) - mu[i]) * inv_std[i];
    }
    if (detail::tracing({&x})) {
        detail::record(out, {&x},
                       [x = x.impl_, o = out.impl_, m, n, inv_std = std::move(inv_std)] {
                           for (int i = 0; i < m; ++i) {
                               double gsum = 0.0, gysum = 0.0;
                               for (int j = 0; j < n; ++j) {
                                   gsum += o->grad[i * n + j];
                                   gysum += o->grad[i * n + j] * o->val[i * n + j];
                               }
                               for (int j = 0; j < n; ++j) {
                                   const double y = o->val[i * n + j];
                                   x->grad[i * n + j] += inv_std[i] / n *
                                                         (n * o->grad[i * n + j] - gsum - y * gysum);
                               }
                           }
                       });
    }
    return out;
}

// ---- batched 3x3 rotation kernels (one row = one row-major 3x3 matrix) ----

inline Tensor mat3_mul_rows(const Tensor& a, const Tensor& b) {
    if (a.cols() != 9 || b.cols() != 9 || a.rows() != b.rows())
        throw ShapeMismatch("mat3_mul_rows expects [N,9] x [N,9]");
    const int m = a.rows();
    Tensor out = Tensor::zeros(m, 9);
    for (int r = 0; r < m; ++r) {
        const double* A = a.values().data() + r * 9;
        const double* B = b.values().data() + r * 9;
        double* C = out.values().data() + r * 9;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                C[i * 3 + j] = A[i * 3] * B[j] + A[i * 3 + 1] * B[3 + j] + A[i * 3 + 2] * B[6 + j];
    }
    if (detail::tracing({&a, &b})) {
        detail::record(out, {&a, &b}, [a = a.impl_, b = b.impl_, o = out.impl_, m] {
            for (int r = 0; r < m; ++r) {
                const double* A = a->val.data() + r * 9;
                const double* B = b->val.data() + r * 9;
                const double* G = o->grad.data() + r * 9;
                if (a->requires_grad) {
                    double* dA = a->grad.data() + r * 9;
                    // dA = G * B^T
                    for (int i = 0; i < 3; ++i)
                        for (int k = 0; k < 3; ++k)
                            dA[i * 3 + k] += G[i * 3] * B[k * 3] + G[i * 3 + 1] * B[k * 3 + 1] +
                                             G[i * 3 + 2] * B[k * 3 + 2];
                }
                if (b->requires_grad) {
                    double* dB = b->grad.data() + r * 9;
                    // dB = A^T * G
                    for (int k = 0; k < 3; ++k)
                        for (int j = 0; j < 3; ++j)
                            dB[k * 3 + j] += A[k] * G[j] + A[3 + k] * G[3 + j] + A[6 + k] * G[6 + j];
                }
            }
        });
    }
    return out;
}

// y[r,:] = R[r] * v[r,:]; v may have one row, broadcast across R's rows.
inline Tensor mat3_apply_rows(const Tensor& rot, const Tensor& v) {
    if (rot.cols() != 9 || v.cols() != 3) throw ShapeMismatch("mat3_apply_rows shapes");
    if (v.rows() != rot.rows() && v.rows() != 1) throw ShapeMismatch("mat3_apply_rows rows");
    const int m = rot.rows();
    const bool bcast = v.rows() == 1;
    Tensor out = Tensor::zeros(m, 3);
    for (int r = 0; r < m; ++r) {
        const double* R = rot.values().data() + r * 9;
        const double* x = v.values().data() + (bcast ? 0 : r * 3);
        double* y = out.values().data() + r * 3;
        for (int i = 0; i < 3; ++i) y[i] = R[i * 3] * x[0] + R[i * 3 + 1] * x[1] + R[i * 3 + 2] * x[2];
    }
    if (detail::tracing({&rot, &v})) {
        detail::record(out, {&rot, &v}, [rot = rot.impl_, v = v.impl_, o = out.impl_, m, bcast] {
            for (int r = 0; r < m; ++r) {
                const double* R = rot->val.data() + r * 9;
                const double* x = v->val.data() + (bcast ? 0 : r * 3);
                const double* g = o->grad.data() + r * 3;
                if (rot->requires_grad) {
                    double* dR = rot->grad.data() + r * 9;
                    for (int i = 0; i < 3; ++i)
                        for (int j = 0; j < 3; ++j) dR[i * 3 + j] += g[i] * x[j];
                }
                if (v->requires_grad) {
                    double* dx = v->grad.data() + (bcast ? 0 : r * 3);
                    for (int j = 0; j < 3; ++j)
                        dx[j] += R[j] * g[0] + R[3 + j] * g[1] + R[6 + j] * g[2];
                }
            }
        });
    }
    return out;
}

// ---- composites ----

inline Tensor mse(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "mse");
    return mean(square(sub(a, b)));
}

// row-wise cross product of [N,3] x [N,3]
inline Tensor cross_rows(const Tensor& a, const Tensor& b) {
    if (a.cols() != 3 || b.cols() != 3) throw ShapeMismatch("cross_rows expects [N,3]");
    Tensor ax = slice_cols(a, 0, 1), ay = slice_cols(a, 1, 1), az = slice_cols(a, 2, 1);
    Tensor bx = slice_cols(b, 0, 1), by = slice_cols(b, 1, 1), bz = slice_cols(b, 2, 1);
    Tensor cx = sub(mul(ay, bz), mul(az, by));
    Tensor cy = sub(mul(az, bx), mul(ax, bz));
    Tensor cz = sub(mul(ax, by), mul(ay, bx));
    return concat_cols(concat_cols(cx, cy), cz);
}

// Scaled dot-product multi-head attention over pre-projected q, k, v.
// q: [N,D], k: [M,D], v: [M,D]; D divisible by heads.
inline Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads) {
    if (q.cols() != k.cols() || k.rows() != v.rows() || k.cols() != v.cols())
        throw ShapeMismatch("attention q/k/v shapes");
    if (heads < 1 || q.cols() % heads != 0)
        throw ShapeMismatch("attention: model dim not divisible by heads");
    const int dh = q.cols() / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor out;
    for (int h = 0; h < heads; ++h) {
        Tensor qh = slice_cols(q, h * dh, dh);
        Tensor kh = slice_cols(k, h * dh, dh);
        Tensor vh = slice_cols(v, h * dh, dh);
        Tensor scores = affine(matmul(qh, transpose(kh)), scale, 0.0);
        Tensor oh = matmul(softmax_rows(scores), vh);
        out = out.defined() ? concat_cols(out, oh) : oh;
    }
    return out;
}

// FiLM application: y = x * gamma + delta with per-channel [1,n] terms.
inline Tensor film_apply(const Tensor& x, const Tensor& gamma, const Tensor& delta) {
    return add_rowvec(mul_rowvec(x, gamma), delta);
}

}  // namespace choreo::ag
