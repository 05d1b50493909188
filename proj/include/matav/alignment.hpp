#pragma once

#include <cstddef>
#include <vector>

#include "matav/matrix.hpp"
#include "matav/rng.hpp"
#include "matav/tape.hpp"

namespace matav {

struct MecConfig {
    double lambda = 0.3;        // weight of the MEC term in the total loss
    double tau = 1.0;           // temperature
    std::size_t capacity = 2048;  // queue capacity M
    double momentum = 0.995;    // EMA coefficient m
    bool symmetric = false;     // adds mirrored (A,T'), (V,A'), (V,T') terms

    void validate() const;
};

// One linear head per modality, outputs L2-normalized proj_dim rows.
struct ProjectionHeads {
    Matrix w_t, b_t;  // t_dim x proj_dim, 1 x proj_dim
    Matrix w_a, b_a;
    Matrix w_v, b_v;

    static ProjectionHeads init(std::size_t t_dim, std::size_t a_dim, std::size_t v_dim,
                                std::size_t proj_dim, Rng& rng);

    // Non-tape projection: l2_normalize_rows(X W + b).
    Matrix project_t(const Matrix& x) const { return project(x, w_t, b_t); }
    Matrix project_a(const Matrix& x) const { return project(x, w_a, b_a); }
    Matrix project_v(const Matrix& x) const { return project(x, w_v, b_v); }

    static Matrix project(const Matrix& x, const Matrix& w, const Matrix& b);
};

// EMA copy of the online heads; never receives gradient.
using MomentumHeads = ProjectionHeads;

// theta' <- m * theta' + (1 - m) * theta, elementwise over all head tensors.
void momentum_update(const ProjectionHeads& online, MomentumHeads& mom, double m);

// Fixed-capacity FIFO of unit-norm rows, oldest evicted first.
class NegativeQueue {
public:
    NegativeQueue(std::size_t capacity, std::size_t dim)
        : capacity_(capacity), dim_(dim), storage_(capacity, dim) {}

    std::size_t capacity() const { return capacity_; }
    std::size_t dim() const { return dim_; }
    std::size_t fill() const { return fill_; }

    void enqueue(const Matrix& rows);

    // Current contents, oldest first; fill() x dim.
    Matrix snapshot() const;

private:
    std::size_t capacity_;
    std::size_t dim_;
    std::size_t fill_ = 0;
    std::size_t head_ = 0;  // next write slot
    Matrix storage_;
};

// Dot product of two unit rows (1 x d each).
double similarity(const Matrix& q, const Matrix& k);

// Heads-as-tape-vars, bound by the model for a training step.
struct HeadVars {
    Var w_t, b_t, w_a, b_a, w_v, b_v;
};

// Tape projection of a feature batch through one head.
Var project_on_tape(Tape& tape, Var features, Var w, Var b);

// One InfoNCE term: anchors vs (per-row positive, shared queue negatives).
// positives and queue rows are constants; gradient reaches anchors only.
Var info_nce_term(Tape& tape, Var anchors, const Matrix& positives, const Matrix& queue,
                  double tau);

// Eq-style three-term MEC loss: (T vs A'), (A vs V'), (T vs V'), batch mean.
// t_hat/a_hat/v_hat are tape vars of unit rows; momentum projections and
// queue snapshots enter as constants.
Var mec_loss(Tape& tape, Var t_hat, Var a_hat, Var v_hat, const Matrix& mom_t,
             const Matrix& mom_a, const Matrix& mom_v, const NegativeQueue& queue_t,
             const NegativeQueue& queue_a, const NegativeQueue& queue_v, const MecConfig& cfg);

// Full alignment state: online + momentum heads and the three queues.
struct AlignmentState {
    ProjectionHeads online;
    MomentumHeads momentum;
    NegativeQueue queue_t, queue_a, queue_v;
    MecConfig cfg;

    AlignmentState(std::size_t t_dim, std::size_t a_dim, std::size_t v_dim,
                   std::size_t proj_dim, const MecConfig& mec, Rng& rng);

    // Post-optimizer half of a training step: EMA update, then enqueue the
    // given momentum projections (computed before the update, alongside the
    // loss) into their queues.
    void finish_step(const Matrix& mom_t, const Matrix& mom_a, const Matrix& mom_v);
};

}  // namespace matav
