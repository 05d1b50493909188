#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "matav/adam.hpp"
#include "matav/gradcheck.hpp"
#include "matav/matrix.hpp"
#include "matav/rng.hpp"
#include "matav/tape.hpp"
#include "matav/threading.hpp"

using namespace matav;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
    Matrix m(r, c);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.gaussian();
    return m;
}

// Independent triple-loop oracle.
Matrix naive_mm(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
            c(i, j) = acc;
        }
    return c;
}

}  // namespace

TEST_CASE("matmul identity and scalar") {
    Rng rng(1);
    Matrix x = random_matrix(4, 4, rng);
    CHECK(mm_nn(Matrix::identity(4), x) == x);
    CHECK(mm_nn(x, Matrix::identity(4)) == x);
    Matrix two = Matrix::from_rows(1, 1, {2.0});
    Matrix three = Matrix::from_rows(1, 1, {3.0});
    CHECK(mm_nn(two, three)(0, 0) == 6.0);
}

TEST_CASE("matmul matches naive triple loop exactly") {
    Rng rng(2);
    Matrix a = random_matrix(3, 4, rng);
    Matrix b = random_matrix(4, 2, rng);
    CHECK(mm_nn(a, b) == naive_mm(a, b));
    CHECK(mm_nt(a, transpose(b)) == naive_mm(a, b));
    CHECK(mm_tn(transpose(a), b) == naive_mm(a, b));
}

TEST_CASE("matmul result independent of thread count") {
    Rng rng(3);
    // Big enough to trip the parallel path.
    Matrix a = random_matrix(64, 80, rng);
    Matrix b = random_matrix(80, 48, rng);
    set_max_threads(1);
    Matrix c1 = mm_nn(a, b);
    set_max_threads(4);
    Matrix c4 = mm_nn(a, b);
    set_max_threads(0);
    CHECK(c1 == c4);
}

TEST_CASE("matmul shape mismatch throws") {
    Matrix a(2, 3), b(4, 2);
    CHECK_THROWS(mm_nn(a, b));
}

TEST_CASE("softmax rows") {
    Matrix u = softmax_rows(Matrix::from_rows(1, 3, {0, 0, 0}));
    for (std::size_t j = 0; j < 3; ++j) CHECK(u(0, j) == doctest::Approx(1.0 / 3).epsilon(1e-15));

    Matrix big = softmax_rows(Matrix::from_rows(1, 2, {1000, 0}));
    CHECK(std::fabs(big(0, 0) - 1.0) < 1e-12);
    CHECK(std::fabs(big(0, 1)) < 1e-12);

    Matrix s = softmax_rows(Matrix::from_rows(1, 3, {1, 2, 3}));
    CHECK(s(0, 0) == doctest::Approx(0.09003057).epsilon(1e-7));
    CHECK(s(0, 1) == doctest::Approx(0.24472847).epsilon(1e-7));
    CHECK(s(0, 2) == doctest::Approx(0.66524096).epsilon(1e-7));
}

TEST_CASE("softmax shift invariance") {
    Rng rng(4);
    Matrix x = random_matrix(5, 7, rng);
    Matrix shifted = x;
    for (std::size_t i = 0; i < shifted.rows(); ++i)
        for (std::size_t j = 0; j < shifted.cols(); ++j) shifted(i, j) += 100.0;
    CHECK(max_abs_diff(softmax_rows(x), softmax_rows(shifted)) < 1e-12);
}

TEST_CASE("l2 normalize rows") {
    Matrix y = l2_normalize_rows(Matrix::from_rows(1, 2, {3, 4}));
    CHECK(y(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(y(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
    Matrix unit = Matrix::from_rows(1, 2, {1, 0});
    CHECK(max_abs_diff(l2_normalize_rows(unit), unit) < 1e-15);
    CHECK_THROWS(l2_normalize_rows(Matrix(1, 3)));
}

TEST_CASE("silu") {
    CHECK(silu(Matrix::from_rows(1, 1, {0.0}))(0, 0) == 0.0);
    CHECK(std::fabs(silu(Matrix::from_rows(1, 1, {20.0}))(0, 0) - 20.0) < 1e-6);
    CHECK(silu(Matrix::from_rows(1, 1, {1.0}))(0, 0) == doctest::Approx(0.7310586).epsilon(1e-7));
}

TEST_CASE("softplus") {
    CHECK(softplus(Matrix::from_rows(1, 1, {0.0}))(0, 0) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(std::fabs(softplus(Matrix::from_rows(1, 1, {50.0}))(0, 0) - 50.0) < 1e-12);
    CHECK(softplus(Matrix::from_rows(1, 1, {-1.0}))(0, 0) ==
          doctest::Approx(0.31326169).epsilon(1e-7));
}

TEST_CASE("cross entropy") {
    Matrix uniform(3, 4);
    CHECK(cross_entropy(uniform, {0, 1, 2}) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    Matrix peaked(1, 3);
    peaked(0, 1) = 1e3;
    CHECK(cross_entropy(peaked, {1}) < 1e-12);

    CHECK(cross_entropy(Matrix::from_rows(1, 3, {1, 2, 3}), {2}) ==
          doctest::Approx(0.40760596).epsilon(1e-7));
}

TEST_CASE("tape: sum gradient is all-ones") {
    Rng rng(5);
    Tape tape;
    Var x = tape.leaf(random_matrix(3, 4, rng));
    tape.backward(tape.sum_all(x));
    Matrix g = tape.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g.data()[i] == 1.0);
}

TEST_CASE("tape: half squared norm gradient is x") {
    Rng rng(6);
    Matrix x0 = random_matrix(3, 4, rng);
    Tape tape;
    Var x = tape.leaf(x0);
    tape.backward(tape.scale(tape.sum_all(tape.hadamard(x, x)), 0.5));
    CHECK(max_abs_diff(tape.grad(x), x0) < 1e-14);
}

TEST_CASE("tape: gradient accumulates over shared consumers") {
    Tape tape;
    Var x = tape.leaf(Matrix::from_rows(1, 1, {2.0}));
    // loss = x*x + 3x -> d/dx = 2x + 3 = 7
    Var loss = tape.add(tape.hadamard(x, x), tape.scale(x, 3.0));
    tape.backward(loss);
    CHECK(tape.grad(x)(0, 0) == doctest::Approx(7.0).epsilon(1e-14));
}

TEST_CASE("tape: constants receive no gradient") {
    Tape tape;
    Var c = tape.constant(Matrix::from_rows(1, 1, {2.0}));
    Var x = tape.leaf(Matrix::from_rows(1, 1, {3.0}));
    tape.backward(tape.hadamard(x, c));
    CHECK_FALSE(tape.requires_grad(c));
    CHECK(tape.grad(x)(0, 0) == 2.0);
}

TEST_CASE("finite-difference suite over all primitives") {
    GradCheckOptions opts;
    auto worst = run_gradcheck(opts, "numeric");
    CHECK(worst.at("numeric") < kGradCheckTolerance);
}

TEST_CASE("adam: zero grad and zero decay keeps params fixed") {
    AdamConfig cfg;
    cfg.weight_decay = 0.0;
    AdamState adam(cfg);
    Matrix p = Matrix::from_rows(1, 2, {1.5, -0.5});
    Matrix before = p;
    std::vector<Matrix*> params = {&p};
    std::vector<Matrix> grads = {Matrix(1, 2)};
    for (int i = 0; i < 5; ++i) adam.step(params, grads);
    CHECK(p == before);
}

TEST_CASE("adam: first step moves by about lr") {
    AdamConfig cfg;
    cfg.lr = 1e-3;
    cfg.weight_decay = 0.0;
    AdamState adam(cfg);
    Matrix p = Matrix::from_rows(1, 1, {0.7});
    std::vector<Matrix*> params = {&p};
    std::vector<Matrix> grads = {Matrix::from_rows(1, 1, {0.25})};
    adam.step(params, grads);
    // Bias-corrected first step: delta = lr * g / (|g| + eps*correction) ~ lr.
    CHECK(std::fabs(0.7 - p(0, 0)) == doctest::Approx(cfg.lr).epsilon(1e-6));

    double prev = p(0, 0);
    adam.step(params, grads);
    CHECK(std::fabs(prev - p(0, 0)) == doctest::Approx(cfg.lr).epsilon(1e-6));
}

TEST_CASE("rng streams are deterministic and platform-pinned") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng g(7);
    // First draws of the documented seed-7 stream.
    double u = g.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    Rng g2(7);
    CHECK(g.next_u64() != g2.next_u64());  // g advanced by the uniform draw
    Rng h1(9), h2(9);
    for (int i = 0; i < 50; ++i) CHECK(h1.gaussian() == h2.gaussian());
}

TEST_CASE("logsumexp rows on the tape is shift stable") {
    Tape tape;
    Var x = tape.leaf(Matrix::from_rows(1, 3, {1000, 1001, 1002}));
    const Matrix lse = tape.value(tape.logsumexp_rows(x));
    const double expect = 1002 + std::log(std::exp(-2.0) + std::exp(-1.0) + 1.0);
    CHECK(lse(0, 0) == doctest::Approx(expect).epsilon(1e-14));
}
