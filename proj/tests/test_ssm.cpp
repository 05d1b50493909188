#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "matav/gradcheck.hpp"
#include "matav/matrix.hpp"
#include "matav/rng.hpp"
#include "matav/ssm.hpp"
#include "matav/tape.hpp"

using namespace matav;

namespace {

ScanInputs random_inputs(std::size_t n, std::size_t d, std::size_t N, Rng& rng) {
    ScanInputs in;
    in.x = Matrix(n, d);
    in.delta = Matrix(n, d);
    in.b = Matrix(n, N);
    in.c = Matrix(n, N);
    in.a = Matrix(d, N);
    for (std::size_t i = 0; i < in.x.size(); ++i) in.x.data()[i] = rng.gaussian();
    for (std::size_t i = 0; i < in.delta.size(); ++i)
        in.delta.data()[i] = 0.01 + 0.2 * rng.uniform();
    for (std::size_t i = 0; i < in.b.size(); ++i) in.b.data()[i] = rng.gaussian();
    for (std::size_t i = 0; i < in.c.size(); ++i) in.c.data()[i] = rng.gaussian();
    for (std::size_t i = 0; i < in.a.size(); ++i) in.a.data()[i] = -0.2 - 2.0 * rng.uniform();
    return in;
}

// Independent O(n N) reimplementation with explicit loops.
Matrix scan_oracle(const ScanInputs& in) {
    const std::size_t n = in.steps(), d = in.channels(), N = in.state_dim();
    Matrix y(n, d);
    for (std::size_t ch = 0; ch < d; ++ch) {
        std::vector<double> h(N, 0.0);
        for (std::size_t t = 0; t < n; ++t) {
            const double dt = in.delta(t, ch);
            for (std::size_t s = 0; s < N; ++s) {
                const double abar = std::exp(dt * in.a(ch, s));
                const double bbar = dt * in.b(t, s);
                h[s] = abar * h[s] + bbar * in.x(t, ch);
            }
            double out = 0.0;
            for (std::size_t s = 0; s < N; ++s) out += in.c(t, s) * h[s];
            y(t, ch) = out;
        }
    }
    return y;
}

}  // namespace

TEST_CASE("discretization") {
    // Delta*A -> 0: abar -> 1, bbar -> 0.
    auto [abar0, bbar0] = discretize(-1.0, 1e-12, 5.0);
    CHECK(std::fabs(abar0 - 1.0) < 1e-9);
    CHECK(std::fabs(bbar0) < 1e-9);

    auto [abar1, bbar1] = discretize(-1.0, std::log(2.0), 1.0);
    CHECK(abar1 == doctest::Approx(0.5).epsilon(1e-15));

    auto [abar2, bbar2] = discretize(-2.0, 0.5, 3.0);
    CHECK(abar2 == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK(abar2 == doctest::Approx(0.3678794).epsilon(1e-7));
    CHECK(bbar2 == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("degenerate parameters reduce the scan to prefix sums") {
    const std::size_t n = 6;
    ScanInputs in;
    in.x = Matrix(n, 1);
    for (std::size_t t = 0; t < n; ++t) in.x(t, 0) = static_cast<double>(t + 1);
    in.delta = Matrix(n, 1, 1.0);
    in.b = Matrix(n, 1, 1.0);
    in.c = Matrix(n, 1, 1.0);
    in.a = Matrix(1, 1, -1e-300);  // abar = exp(-1e-300) == 1 in f64
    Matrix y = scan_sequential(in);
    double acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        acc += in.x(t, 0);
        CHECK(y(t, 0) == doctest::Approx(acc).epsilon(1e-15));
    }
}

TEST_CASE("two-step hand recurrence") {
    ScanInputs in;
    in.x = Matrix(2, 1, 1.0);
    in.delta = Matrix(2, 1, std::log(2.0));
    in.b = Matrix(2, 1, 1.0);
    in.c = Matrix(2, 1, 1.0);
    in.a = Matrix(1, 1, -1.0);
    // abar = 0.5, bbar = ln 2: h1 = ln 2, h2 = 0.5 ln 2 + ln 2.
    Matrix y = scan_sequential(in);
    CHECK(y(0, 0) == doctest::Approx(0.6931472).epsilon(1e-7));
    CHECK(y(1, 0) == doctest::Approx(1.0397208).epsilon(1e-7));
}

TEST_CASE("sequential scan is bit-identical to the naive oracle") {
    Rng rng(3);
    ScanInputs in = random_inputs(17, 5, 4, rng);
    CHECK(scan_sequential(in) == scan_oracle(in));
}

TEST_CASE("chunked scan equivalence") {
    Rng rng(4);
    ScanInputs in = random_inputs(64, 6, 3, rng);
    Matrix seq = scan_sequential(in);
    CHECK(scan_chunked(in, 1) == seq);  // bitwise
    for (std::size_t chunks : {2, 3, 8, 63, 64, 200}) {
        CHECK(max_abs_diff(scan_chunked(in, chunks), seq) < 1e-12);
    }
}

TEST_CASE("affine map composition") {
    // Two steps, each with decay 0.5 and unit input response: the composed
    // map is h -> 0.25 h + 1.5.
    ScanInputs in;
    in.x = Matrix(2, 1, 1.0);
    in.delta = Matrix(2, 1, std::log(2.0));
    in.b = Matrix(2, 1, 1.0 / std::log(2.0));  // bbar = delta * b = 1
    in.c = Matrix(2, 1, 1.0);
    in.a = Matrix(1, 1, -1.0);
    Matrix y = scan_chunked(in, 2);
    // h0 = 0 so y after two steps is the composed offset 1.5.
    CHECK(y(1, 0) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(y(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("backward: zero output gradient gives zero input gradients") {
    Rng rng(5);
    ScanInputs in = random_inputs(12, 3, 2, rng);
    ScanGrads g = scan_backward(in, Matrix(12, 3), 3);
    CHECK(frobenius_norm(g.dx) == 0.0);
    CHECK(frobenius_norm(g.ddelta) == 0.0);
    CHECK(frobenius_norm(g.db) == 0.0);
    CHECK(frobenius_norm(g.dc) == 0.0);
    CHECK(frobenius_norm(g.da) == 0.0);
}

TEST_CASE("backward: prefix-sum case has suffix-sum x gradient") {
    const std::size_t n = 5;
    ScanInputs in;
    in.x = Matrix(n, 1);
    for (std::size_t t = 0; t < n; ++t) in.x(t, 0) = 0.3 * static_cast<double>(t) - 1.0;
    in.delta = Matrix(n, 1, 1.0);
    in.b = Matrix(n, 1, 1.0);
    in.c = Matrix(n, 1, 1.0);
    in.a = Matrix(1, 1, -1e-300);
    Matrix dy(n, 1);
    for (std::size_t t = 0; t < n; ++t) dy(t, 0) = static_cast<double>(t + 1);
    ScanGrads g = scan_backward(in, dy, 2);
    for (std::size_t t = 0; t < n; ++t) {
        double suffix = 0.0;
        for (std::size_t s = t; s < n; ++s) suffix += dy(s, 0);
        CHECK(g.dx(t, 0) == doctest::Approx(suffix).epsilon(1e-12));
    }
}

TEST_CASE("backward matches central finite differences on every coordinate") {
    Rng rng(6);
    ScanInputs in = random_inputs(32, 3, 2, rng);
    Matrix dy(32, 3);
    for (std::size_t i = 0; i < dy.size(); ++i) dy.data()[i] = rng.gaussian();
    ScanGrads g = scan_backward(in, dy, 5);

    auto loss = [&](const ScanInputs& probe) {
        Matrix y = scan_sequential(probe);
        double acc = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) acc += y.data()[i] * dy.data()[i];
        return acc;
    };
    const double h = 1e-6;
    auto check_tensor = [&](Matrix ScanInputs::* field, const Matrix& analytic) {
        ScanInputs probe = in;
        Matrix& m = probe.*field;
        for (std::size_t i = 0; i < m.size(); ++i) {
            const double orig = m.data()[i];
            m.data()[i] = orig + h;
            const double fp = loss(probe);
            m.data()[i] = orig - h;
            const double fm = loss(probe);
            m.data()[i] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const double an = analytic.data()[i];
            CHECK(std::fabs(fd - an) / std::max({std::fabs(fd), std::fabs(an), 1e-3}) < 1e-5);
        }
    };
    check_tensor(&ScanInputs::x, g.dx);
    check_tensor(&ScanInputs::delta, g.ddelta);
    check_tensor(&ScanInputs::b, g.db);
    check_tensor(&ScanInputs::c, g.dc);
    check_tensor(&ScanInputs::a, g.da);
}

TEST_CASE("block causality: perturbing a step leaves earlier outputs untouched") {
    Rng rng(7);
    SsmBlock blk = SsmBlock::init(4, 3, rng);
    Matrix z(8, 4);
    for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] = rng.gaussian();
    Matrix f = ssm_block_forward(blk, z);
    const std::size_t k = 5;
    Matrix z2 = z;
    for (std::size_t j = 0; j < 4; ++j) z2(k, j) += 1.0;
    Matrix f2 = ssm_block_forward(blk, z2);
    for (std::size_t t = 0; t < k; ++t)
        for (std::size_t j = 0; j < 4; ++j) CHECK(f(t, j) == f2(t, j));
    bool later_changed = false;
    for (std::size_t j = 0; j < 4; ++j) later_changed = later_changed || f(k, j) != f2(k, j);
    CHECK(later_changed);
}

TEST_CASE("closed gate zeroes the block output") {
    Rng rng(8);
    SsmBlock blk = SsmBlock::init(4, 3, rng);
    blk.w_z = Matrix(4, 4);  // silu(0) = 0, so the gate kills everything
    Matrix z(5, 4);
    for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] = rng.gaussian();
    CHECK(frobenius_norm(ssm_block_forward(blk, z)) == 0.0);
}

TEST_CASE("block matches a scripted composition of its sub-operations") {
    Rng rng(9);
    const std::size_t d = 4, N = 3, n = 8;
    SsmBlock blk = SsmBlock::init(d, N, rng);
    Matrix z(n, d);
    for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] = rng.gaussian();

    ScanInputs in;
    in.x = z;
    in.delta = mm_nn(z, blk.w_delta);
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t j = 0; j < d; ++j) in.delta(t, j) += blk.b_delta(0, j);
    in.delta = softplus(in.delta);
    in.b = mm_nn(z, blk.w_b);
    in.c = mm_nn(z, blk.w_c);
    in.a = blk.a_log;
    for (std::size_t i = 0; i < in.a.size(); ++i) in.a.data()[i] = -std::exp(in.a.data()[i]);
    Matrix y = scan_oracle(in);
    Matrix gate = silu(mm_nn(z, blk.w_z));
    Matrix f = mm_nn(hadamard(y, gate), blk.w_out);
    CHECK(max_abs_diff(ssm_block_forward(blk, z), f) < 1e-12);
}

TEST_CASE("stability: negative A keeps a long constant-input scan bounded") {
    Rng rng(10);
    ScanInputs in = random_inputs(2000, 2, 2, rng);
    for (std::size_t i = 0; i < in.x.size(); ++i) in.x.data()[i] = 1.0;
    Matrix y = scan_sequential(in);
    CHECK(y.all_finite());
    double mx = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) mx = std::max(mx, std::fabs(y.data()[i]));
    CHECK(mx < 1e4);
}

TEST_CASE("block init follows the documented parameterization") {
    Rng rng(11);
    SsmBlock blk = SsmBlock::init(5, 4, rng);
    for (std::size_t d = 0; d < 5; ++d)
        for (std::size_t s = 0; s < 4; ++s)
            CHECK(blk.a_log(d, s) ==
                  doctest::Approx(std::log(static_cast<double>(s + 1))).epsilon(1e-14));
    // softplus(b_delta) lands in the documented [1e-3, 0.1] band.
    Matrix dt = softplus(blk.b_delta);
    for (std::size_t j = 0; j < dt.size(); ++j) {
        CHECK(dt.data()[j] >= 1e-3 - 1e-12);
        CHECK(dt.data()[j] <= 0.1 + 1e-12);
    }
}

TEST_CASE("tape scan op agrees with the plain block forward") {
    Rng rng(12);
    const std::size_t d = 4, N = 3, n = 6;
    SsmBlock blk = SsmBlock::init(d, N, rng);
    Matrix z(n, d);
    for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] = rng.gaussian();
    Tape tape;
    SsmBlockVars vars{tape.leaf(blk.a_log),   tape.leaf(blk.w_delta), tape.leaf(blk.b_delta),
                      tape.leaf(blk.w_b),     tape.leaf(blk.w_c),     tape.leaf(blk.w_z),
                      tape.leaf(blk.w_out)};
    Matrix f_tape = tape.value(ssm_block_forward(tape, vars, tape.constant(z), 2));
    CHECK(max_abs_diff(f_tape, ssm_block_forward(blk, z)) < 1e-12);
}

TEST_CASE("validation rejects malformed scan inputs") {
    Rng rng(13);
    ScanInputs in = random_inputs(4, 2, 2, rng);
    in.delta(1, 0) = 0.0;
    CHECK_THROWS(in.validate());
    in = random_inputs(4, 2, 2, rng);
    in.a(0, 0) = 0.5;
    CHECK_THROWS(in.validate());
    in = random_inputs(4, 2, 2, rng);
    in.b = Matrix(3, 2);
    CHECK_THROWS(in.validate());
}

TEST_CASE("ssm gradients match finite differences") {
    auto worst = run_gradcheck(GradCheckOptions{}, "ssm");
    CHECK(worst.at("ssm") < kGradCheckTolerance);
}
