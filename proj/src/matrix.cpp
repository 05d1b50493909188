#include "matav/matrix.hpp"

#include <cmath>
#include <cstring>

#include "matav/threading.hpp"

namespace matav {

namespace {

// Below this many multiply-adds a matmul stays on the calling thread.
constexpr std::size_t kParallelFlopThreshold = 1u << 17;

void check_inner(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw std::invalid_argument(std::string(what) + ": inner dimension mismatch");
}

}  // namespace

bool Matrix::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Matrix::shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix mm_nn(const Matrix& a, const Matrix& b) {
    check_inner(a.cols(), b.rows(), "mm_nn");
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    Matrix c(n, m);
    auto body = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            double* ci = c.row(i);
            const double* ai = a.row(i);
            for (std::size_t p = 0; p < k; ++p) {
                const double av = ai[p];
                if (av == 0.0) continue;
                const double* bp = b.row(p);
                for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
            }
        }
    };
    if (n * k * m >= kParallelFlopThreshold)
        parallel_for(n, body);
    else
        body(0, n);
    return c;
}

Matrix mm_nt(const Matrix& a, const Matrix& b) {
    check_inner(a.cols(), b.cols(), "mm_nt");
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    Matrix c(n, m);
    auto body = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            double* ci = c.row(i);
            const double* ai = a.row(i);
            for (std::size_t j = 0; j < m; ++j) {
                const double* bj = b.row(j);
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
                ci[j] = acc;
            }
        }
    };
    if (n * k * m >= kParallelFlopThreshold)
        parallel_for(n, body);
    else
        body(0, n);
    return c;
}

Matrix mm_tn(const Matrix& a, const Matrix& b) {
    check_inner(a.rows(), b.rows(), "mm_tn");
    const std::size_t n = a.cols(), k = a.rows(), m = b.cols();
    Matrix c(n, m);
    auto body = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            double* ci = c.row(i);
            for (std::size_t p = 0; p < k; ++p) {
                const double av = a(p, i);
                if (av == 0.0) continue;
                const double* bp = b.row(p);
                for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
            }
        }
    };
    if (n * k * m >= kParallelFlopThreshold)
        parallel_for(n, body);
    else
        body(0, n);
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

void add_inplace(Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("add_inplace: shape mismatch");
    double* pa = a.data();
    const double* pb = b.data();
    for (std::size_t i = 0; i < a.size(); ++i) pa[i] += pb[i];
}

Matrix add(const Matrix& a, const Matrix& b) {
    Matrix c = a;
    add_inplace(c, b);
    return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("sub: shape mismatch");
    Matrix c = a;
    double* pc = c.data();
    const double* pb = b.data();
    for (std::size_t i = 0; i < c.size(); ++i) pc[i] -= pb[i];
    return c;
}

Matrix scale(const Matrix& a, double s) {
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] *= s;
    return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("hadamard: shape mismatch");
    Matrix c = a;
    double* pc = c.data();
    const double* pb = b.data();
    for (std::size_t i = 0; i < c.size(); ++i) pc[i] *= pb[i];
    return c;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::fabs(a.data()[i] - b.data()[i]));
    return worst;
}

double frobenius_norm(const Matrix& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a.data()[i] * a.data()[i];
    return std::sqrt(acc);
}

}  // namespace matav
