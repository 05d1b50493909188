#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "matav/fusion.hpp"
#include "matav/gradcheck.hpp"
#include "matav/matrix.hpp"
#include "matav/rng.hpp"

using namespace matav;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
    Matrix m(r, c);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.gaussian();
    return m;
}

// Naive loop oracle: explicit softmax then weighted sum, plus residual.
Matrix attention_oracle(const AttentionLayerWeights& w, const Matrix& u) {
    const std::size_t n = u.rows(), d_attn = w.w_q.cols();
    Matrix q = mm_nn(u, w.w_q), k = mm_nn(u, w.w_k), v = mm_nn(u, w.w_v);
    Matrix mixed(n, d_attn);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> scores(n);
        double mx = -1e300;
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < d_attn; ++p) s += q(i, p) * k(j, p);
            scores[j] = s / std::sqrt(static_cast<double>(d_attn));
            mx = std::max(mx, scores[j]);
        }
        double z = 0.0;
        for (double& s : scores) {
            s = std::exp(s - mx);
            z += s;
        }
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < d_attn; ++p) mixed(i, p) += scores[j] / z * v(j, p);
    }
    return add(u, mm_nn(mixed, w.w_o));
}

}  // namespace

TEST_CASE("concat modalities juxtaposes segments in order") {
    Matrix t = Matrix::from_rows(1, 2, {1, 2});
    Matrix a = Matrix::from_rows(1, 3, {3, 4, 5});
    Matrix v = Matrix::from_rows(1, 4, {6, 7, 8, 9});
    Matrix c = concat_modalities(t, a, v);
    CHECK(c == Matrix::from_rows(1, 9, {1, 2, 3, 4, 5, 6, 7, 8, 9}));

    Matrix z = concat_modalities(Matrix(2, 2), Matrix(2, 3), Matrix(2, 4));
    CHECK(z == Matrix(2, 9));

    // Segment recovery.
    Matrix c2 = concat_modalities(t, a, v);
    for (std::size_t j = 0; j < 2; ++j) CHECK(c2(0, j) == t(0, j));
    for (std::size_t j = 0; j < 3; ++j) CHECK(c2(0, 2 + j) == a(0, j));
    for (std::size_t j = 0; j < 4; ++j) CHECK(c2(0, 5 + j) == v(0, j));

    CHECK_THROWS(concat_modalities(Matrix(1, 2), Matrix(2, 3), Matrix(1, 4)));
}

TEST_CASE("single token attention collapses to U + W_O W_V U") {
    Rng rng(2);
    AttentionLayerWeights w{random_matrix(3, 4, rng), random_matrix(3, 4, rng),
                            random_matrix(3, 4, rng), random_matrix(4, 3, rng)};
    Matrix u = random_matrix(1, 3, rng);
    Matrix expect = add(u, mm_nn(mm_nn(u, w.w_v), w.w_o));
    CHECK(max_abs_diff(attention_layer(w, u), expect) < 1e-12);
}

TEST_CASE("identical keys average the values") {
    Rng rng(3);
    AttentionLayerWeights w{random_matrix(3, 4, rng), Matrix(3, 4), random_matrix(3, 4, rng),
                            random_matrix(4, 3, rng)};
    // Zero W_K makes every key identical, so every weight is 1/2.
    Matrix u = random_matrix(2, 3, rng);
    Matrix v = mm_nn(u, w.w_v);
    Matrix avg(2, 4);
    for (std::size_t j = 0; j < 4; ++j)
        avg(0, j) = avg(1, j) = 0.5 * (v(0, j) + v(1, j));
    Matrix expect = add(u, mm_nn(avg, w.w_o));
    CHECK(max_abs_diff(attention_layer(w, u), expect) < 1e-12);
}

TEST_CASE("attention matches the naive loop oracle") {
    Rng rng(4);
    AttentionLayerWeights w{random_matrix(5, 4, rng), random_matrix(5, 4, rng),
                            random_matrix(5, 4, rng), random_matrix(4, 5, rng)};
    Matrix u = random_matrix(3, 5, rng);
    CHECK(max_abs_diff(attention_layer(w, u), attention_oracle(w, u)) < 1e-12);
}

TEST_CASE("attention weights are row stochastic") {
    Rng rng(5);
    AttentionLayerWeights w{random_matrix(6, 4, rng), random_matrix(6, 4, rng),
                            random_matrix(6, 4, rng), random_matrix(4, 6, rng)};
    Matrix u = random_matrix(7, 6, rng);
    Matrix q = mm_nn(u, w.w_q), k = mm_nn(u, w.w_k);
    Matrix weights = softmax_rows(scale(mm_nt(q, k), 1.0 / 2.0));
    for (std::size_t i = 0; i < weights.rows(); ++i) {
        double s = std::accumulate(weights.row(i), weights.row(i) + weights.cols(), 0.0);
        CHECK(std::fabs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("attention stack is permutation equivariant") {
    Rng rng(6);
    AttentionLayerWeights w{random_matrix(4, 3, rng), random_matrix(4, 3, rng),
                            random_matrix(4, 3, rng), random_matrix(3, 4, rng)};
    Matrix u = random_matrix(4, 4, rng);
    const std::vector<std::size_t> perm = {2, 0, 3, 1};
    Matrix up(4, 4);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) up(i, j) = u(perm[i], j);
    Matrix y = attention_layer(w, u);
    Matrix yp = attention_layer(w, up);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(std::fabs(yp(i, j) - y(perm[i], j)) < 1e-12);
}

TEST_CASE("zero weights collapse fusion to the FC bias") {
    FusionStack s;
    s.w_in = Matrix(9, 4);
    s.layers.resize(2);
    for (auto& l : s.layers) {
        l.w_q = Matrix(4, 3);
        l.w_k = Matrix(4, 3);
        l.w_v = Matrix(4, 3);
        l.w_o = Matrix(3, 4);
    }
    s.w_f = Matrix(9, 4);
    s.fc_w = Matrix(4, 4);
    s.fc_b = Matrix::from_rows(1, 4, {0.1, -0.2, 0.3, -0.4});
    Rng rng(7);
    Matrix x = random_matrix(3, 9, rng);
    Matrix z = fuse_dialogue(s, x);
    for (std::size_t i = 0; i < z.rows(); ++i)
        for (std::size_t j = 0; j < z.cols(); ++j) CHECK(z(i, j) == s.fc_b(0, j));
}

TEST_CASE("single utterance fusion equals processing it alone") {
    Rng rng(8);
    FusionStack s = FusionStack::init(9, 5, 4, 3, rng);
    Matrix x = random_matrix(1, 9, rng);
    // A dialogue of one utterance has no peers to attend over, so the n=1
    // pipeline is the only path; re-running it must reproduce it exactly.
    CHECK(fuse_dialogue(s, x) == fuse_dialogue(s, x));
    Matrix both = random_matrix(2, 9, rng);
    for (std::size_t j = 0; j < 9; ++j) both(0, j) = x(0, j);
    // With a second utterance present the first row changes: cross-utterance
    // attention is real.
    Matrix z_both = fuse_dialogue(s, both);
    Matrix first_row(1, 5);
    for (std::size_t j = 0; j < 5; ++j) first_row(0, j) = z_both(0, j);
    CHECK(max_abs_diff(fuse_dialogue(s, x), first_row) > 0.0);
}

TEST_CASE("fusion matches a scripted step-by-step oracle") {
    Rng rng(9);
    FusionStack s = FusionStack::init(9, 5, 4, 2, rng);
    Matrix x = random_matrix(4, 9, rng);
    Matrix u = mm_nn(x, s.w_in);
    for (const auto& l : s.layers) u = attention_oracle(l, u);
    Matrix f = add(mm_nn(x, s.w_f), u);
    Matrix z = mm_nn(f, s.fc_w);
    for (std::size_t i = 0; i < z.rows(); ++i)
        for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += s.fc_b(0, j);
    CHECK(max_abs_diff(fuse_dialogue(s, x), z) < 1e-12);
}

TEST_CASE("empty dialogue is rejected") {
    Rng rng(10);
    FusionStack s = FusionStack::init(9, 5, 4, 1, rng);
    CHECK_THROWS(fuse_dialogue(s, Matrix(0, 9)));
}

TEST_CASE("tape and plain forward agree") {
    Rng rng(11);
    FusionStack s = FusionStack::init(9, 5, 4, 2, rng);
    Matrix x = random_matrix(3, 9, rng);
    Tape tape;
    FusionVars v;
    v.w_in = tape.leaf(s.w_in);
    for (const auto& l : s.layers)
        v.layers.push_back({tape.leaf(l.w_q), tape.leaf(l.w_k), tape.leaf(l.w_v),
                            tape.leaf(l.w_o)});
    v.w_f = tape.leaf(s.w_f);
    v.fc_w = tape.leaf(s.fc_w);
    v.fc_b = tape.leaf(s.fc_b);
    Matrix z_tape = tape.value(fuse_dialogue(tape, v, tape.constant(x)));
    CHECK(max_abs_diff(z_tape, fuse_dialogue(s, x)) < 1e-13);
}

TEST_CASE("fusion gradients match finite differences") {
    auto worst = run_gradcheck(GradCheckOptions{}, "fusion");
    CHECK(worst.at("fusion") < kGradCheckTolerance);
}
