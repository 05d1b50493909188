#include "matav/fusion.hpp"

#include <cmath>
#include <stdexcept>

namespace matav {

namespace {

Matrix init_linear(std::size_t in, std::size_t out, Rng& rng) {
    Matrix w(in, out);
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.gaussian() * s;
    return w;
}

}  // namespace

FusionStack FusionStack::init(std::size_t concat_dim, std::size_t d_model, std::size_t d_attn,
                              std::size_t n_layers, Rng& rng) {
    FusionStack s;
    s.w_in = init_linear(concat_dim, d_model, rng);
    s.layers.resize(n_layers);
    for (auto& l : s.layers) {
        l.w_q = init_linear(d_model, d_attn, rng);
        l.w_k = init_linear(d_model, d_attn, rng);
        l.w_v = init_linear(d_model, d_attn, rng);
        l.w_o = init_linear(d_attn, d_model, rng);
    }
    s.w_f = init_linear(concat_dim, d_model, rng);
    s.fc_w = init_linear(d_model, d_model, rng);
    s.fc_b = Matrix(1, d_model);
    return s;
}

Matrix concat_modalities(const Matrix& t, const Matrix& a, const Matrix& v) {
    if (t.rows() != a.rows() || t.rows() != v.rows())
        throw std::invalid_argument("concat_modalities: utterance count mismatch");
    Matrix out(t.rows(), t.cols() + a.cols() + v.cols());
    for (std::size_t i = 0; i < t.rows(); ++i) {
        double* o = out.row(i);
        for (std::size_t j = 0; j < t.cols(); ++j) *o++ = t(i, j);
        for (std::size_t j = 0; j < a.cols(); ++j) *o++ = a(i, j);
        for (std::size_t j = 0; j < v.cols(); ++j) *o++ = v(i, j);
    }
    return out;
}

Var attention_layer(Tape& tape, const AttentionLayerVars& w, Var u) {
    const std::size_t d_attn = tape.value(w.w_q).cols();
    Var q = tape.matmul(u, w.w_q);
    Var k = tape.matmul(u, w.w_k);
    Var v = tape.matmul(u, w.w_v);
    Var scores = tape.scale(tape.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d_attn)));
    Var attn = tape.matmul(tape.softmax_rows(scores), v);
    return tape.add(u, tape.matmul(attn, w.w_o));
}

Matrix attention_layer(const AttentionLayerWeights& w, const Matrix& u) {
    const std::size_t d_attn = w.w_q.cols();
    Matrix q = mm_nn(u, w.w_q);
    Matrix k = mm_nn(u, w.w_k);
    Matrix v = mm_nn(u, w.w_v);
    Matrix scores = scale(mm_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d_attn)));
    Matrix attn = mm_nn(softmax_rows(scores), v);
    return add(u, mm_nn(attn, w.w_o));
}

Var fuse_dialogue(Tape& tape, const FusionVars& vars, Var x_concat) {
    if (tape.value(x_concat).rows() == 0) throw std::invalid_argument("fuse_dialogue: empty dialogue");
    Var u = tape.matmul(x_concat, vars.w_in);
    for (const auto& layer : vars.layers) u = attention_layer(tape, layer, u);
    Var f = tape.add(tape.matmul(x_concat, vars.w_f), u);
    return tape.add_row_broadcast(tape.matmul(f, vars.fc_w), vars.fc_b);
}

Matrix fuse_dialogue(const FusionStack& stack, const Matrix& x_concat) {
    if (x_concat.rows() == 0) throw std::invalid_argument("fuse_dialogue: empty dialogue");
    Matrix u = mm_nn(x_concat, stack.w_in);
    for (const auto& layer : stack.layers) u = attention_layer(layer, u);
    Matrix f = add(mm_nn(x_concat, stack.w_f), u);
    Matrix z = mm_nn(f, stack.fc_w);
    for (std::size_t i = 0; i < z.rows(); ++i)
        for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += stack.fc_b(0, j);
    return z;
}

}  // namespace matav
