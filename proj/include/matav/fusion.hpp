#pragma once

#include <cstddef>
#include <vector>

#include "matav/matrix.hpp"
#include "matav/rng.hpp"
#include "matav/tape.hpp"

namespace matav {

struct AttentionLayerWeights {
    Matrix w_q, w_k, w_v;  // d_model x d_attn
    Matrix w_o;            // d_attn x d_model
};

// Input projection, attention layers over utterance tokens, merge
// projection, and the FC bridge into the sequence block.
struct FusionStack {
    Matrix w_in;   // (t_dim + a_dim + v_dim) x d_model
    std::vector<AttentionLayerWeights> layers;
    Matrix w_f;    // (t_dim + a_dim + v_dim) x d_model merge projection
    Matrix fc_w;   // d_model x d_model
    Matrix fc_b;   // 1 x d_model

    std::size_t d_model() const { return w_in.cols(); }
    std::size_t concat_dim() const { return w_in.rows(); }

    static FusionStack init(std::size_t concat_dim, std::size_t d_model, std::size_t d_attn,
                            std::size_t n_layers, Rng& rng);
};

struct AttentionLayerVars {
    Var w_q, w_k, w_v, w_o;
};

struct FusionVars {
    Var w_in;
    std::vector<AttentionLayerVars> layers;
    Var w_f, fc_w, fc_b;
};

// Exact juxtaposition [t || a || v] of per-utterance rows; one output row
// per utterance.
Matrix concat_modalities(const Matrix& t, const Matrix& a, const Matrix& v);

// U + W_O Attn(U W_Q, U W_K, U W_V) with 1/sqrt(d_attn) scaling.
Var attention_layer(Tape& tape, const AttentionLayerVars& w, Var u);
Matrix attention_layer(const AttentionLayerWeights& w, const Matrix& u);

// Full per-dialogue pipeline: U0 = X W_in; six attention layers;
// f = X W_f + U6 (projected skip); z = f FC_w + FC_b.
Var fuse_dialogue(Tape& tape, const FusionVars& vars, Var x_concat);
Matrix fuse_dialogue(const FusionStack& stack, const Matrix& x_concat);

}  // namespace matav
