#pragma once

// Small dense linear algebra plus the hand-written derivatives needed by the
// adapter head and the distillation losses. Everything here is row-major
// double precision and sums sequentially over the inner dimension, so tests
// can compare against naive loops bit-for-bit.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "splate/error.hpp"

namespace splate {

using Vector = std::vector<double>;

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : m_rows(rows), m_cols(cols), m_data(rows * cols, fill)
    {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : m_rows(rows), m_cols(cols), m_data(std::move(data))
    {
        if (m_data.size() != rows * cols) {
            throw dimension_error("matrix data length " + std::to_string(m_data.size())
                                  + " != " + std::to_string(rows) + "x" + std::to_string(cols));
        }
    }

    static Matrix identity(std::size_t n)
    {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            m(i, i) = 1.0;
        }
        return m;
    }

    [[nodiscard]] std::size_t rows() const noexcept { return m_rows; }
    [[nodiscard]] std::size_t cols() const noexcept { return m_cols; }
    [[nodiscard]] std::size_t size() const noexcept { return m_data.size(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return m_data[r * m_cols + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return m_data[r * m_cols + c]; }

    [[nodiscard]] std::span<double> row(std::size_t r) noexcept { return {m_data.data() + r * m_cols, m_cols}; }
    [[nodiscard]] std::span<const double> row(std::size_t r) const noexcept
    {
        return {m_data.data() + r * m_cols, m_cols};
    }

    [[nodiscard]] std::vector<double>& data() noexcept { return m_data; }
    [[nodiscard]] const std::vector<double>& data() const noexcept { return m_data; }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t m_rows = 0;
    std::size_t m_cols = 0;
    std::vector<double> m_data;
};

inline bool all_finite(std::span<const double> xs)
{
    return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

inline double dot(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size()) {
        throw dimension_error("dot: length " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

inline Matrix matmul(const Matrix& a, const Matrix& b)
{
    if (a.cols() != b.rows()) {
        throw dimension_error("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " times "
                              + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) {
                acc += a(i, k) * b(k, j);
            }
            out(i, j) = acc;
        }
    }
    return out;
}

/// y = M x
inline Vector matvec(const Matrix& m, std::span<const double> x)
{
    if (m.cols() != x.size()) {
        throw dimension_error("matvec: matrix has " + std::to_string(m.cols()) + " cols, vector has "
                              + std::to_string(x.size()));
    }
    Vector y(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        y[r] = dot(m.row(r), x);
    }
    return y;
}

/// y = M^T x
inline Vector matvec_transposed(const Matrix& m, std::span<const double> x)
{
    if (m.rows() != x.size()) {
        throw dimension_error("matvec_transposed: matrix has " + std::to_string(m.rows()) + " rows, vector has "
                              + std::to_string(x.size()));
    }
    Vector y(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double xr = x[r];
        auto row = m.row(r);
        for (std::size_t c = 0; c < m.cols(); ++c) {
            y[c] += row[c] * xr;
        }
    }
    return y;
}

inline Vector relu(std::span<const double> x)
{
    Vector y(x.size());
    std::transform(x.begin(), x.end(), y.begin(), [](double v) { return v > 0.0 ? v : 0.0; });
    return y;
}

/// Subgradient convention: the derivative at exactly zero is zero.
inline Vector relu_backward(std::span<const double> pre_activation, std::span<const double> grad_out)
{
    if (pre_activation.size() != grad_out.size()) {
        throw dimension_error("relu_backward: length mismatch");
    }
    Vector g(grad_out.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] = pre_activation[i] > 0.0 ? grad_out[i] : 0.0;
    }
    return g;
}

/// log(1 + max(0, x)), the saturation applied to vocabulary logits.
inline double log1p_relu(double x) noexcept { return x > 0.0 ? std::log1p(x) : 0.0; }

inline double log1p_relu_derivative(double x) noexcept { return x > 0.0 ? 1.0 / (1.0 + x) : 0.0; }

/// y = W x + b
inline Vector affine(const Matrix& w, std::span<const double> x, std::span<const double> b)
{
    if (b.size() != w.rows()) {
        throw dimension_error("affine: bias length " + std::to_string(b.size()) + " != " + std::to_string(w.rows()));
    }
    Vector y = matvec(w, x);
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] += b[i];
    }
    return y;
}

/// Accumulates dL/dW (outer product grad_y x^T) and dL/db for y = W x + b and
/// returns dL/dx.
inline Vector affine_backward(const Matrix& w, std::span<const double> x, std::span<const double> grad_y,
                              Matrix& grad_w, std::span<double> grad_b)
{
    if (grad_y.size() != w.rows() || x.size() != w.cols() || grad_w.rows() != w.rows()
        || grad_w.cols() != w.cols() || grad_b.size() != w.rows()) {
        throw dimension_error("affine_backward: shape mismatch");
    }
    for (std::size_t r = 0; r < w.rows(); ++r) {
        const double g = grad_y[r];
        grad_b[r] += g;
        if (g == 0.0) {
            continue;
        }
        auto grow = grad_w.row(r);
        for (std::size_t c = 0; c < w.cols(); ++c) {
            grow[c] += g * x[c];
        }
    }
    return matvec_transposed(w, grad_y);
}

/// Numerically stable log-softmax.
inline Vector log_softmax(std::span<const double> x)
{
    if (x.empty()) {
        throw validation_error("log_softmax: empty input");
    }
    const double m = *std::max_element(x.begin(), x.end());
    double sum = 0.0;
    for (double v : x) {
        sum += std::exp(v - m);
    }
    const double log_sum = std::log(sum);
    Vector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = (x[i] - m) - log_sum;
    }
    return out;
}

inline Vector softmax(std::span<const double> x)
{
    Vector out = log_softmax(x);
    for (double& v : out) {
        v = std::exp(v);
    }
    return out;
}

/// Records forward traces of one differentiable computation so a later
/// backward pass can replay them.
///
/// The tape only hands out handles; what a trace contains, and how gradients
/// flow through it, belongs to the module that records it. Each tape has a
/// process-unique id so a handle (or a loss built from handles) cannot be
/// replayed against a tape it was not recorded on.
template <class Trace>
class gradient_tape {
public:
    struct handle {
        std::uint64_t tape_id;
        std::size_t index;
    };

    gradient_tape() : m_id(next_id()) {}

    handle record(Trace trace)
    {
        m_traces.push_back(std::move(trace));
        return handle{m_id, m_traces.size() - 1};
    }

    [[nodiscard]] const Trace& trace(handle h) const
    {
        check(h);
        return m_traces[h.index];
    }

    void check(handle h) const
    {
        if (h.tape_id != m_id || h.index >= m_traces.size()) {
            throw usage_error("gradient_tape: handle was not recorded on this tape");
        }
    }

    [[nodiscard]] std::uint64_t id() const noexcept { return m_id; }
    [[nodiscard]] std::size_t size() const noexcept { return m_traces.size(); }

    void clear()
    {
        m_traces.clear();
        m_id = next_id();
    }

private:
    static std::uint64_t next_id()
    {
        static std::atomic<std::uint64_t> counter{1};
        return counter.fetch_add(1, std::memory_order_relaxed);
    }

    std::uint64_t m_id;
    std::vector<Trace> m_traces;
};

}  // namespace splate
