#include "matav/alignment.hpp"

#include <cmath>
#include <stdexcept>

namespace matav {

void MecConfig::validate() const {
    if (lambda < 0.0) throw std::invalid_argument("MecConfig: lambda < 0");
    if (tau <= 0.0) throw std::invalid_argument("MecConfig: tau <= 0");
    if (capacity < 1) throw std::invalid_argument("MecConfig: capacity < 1");
    if (momentum < 0.0 || momentum > 1.0)
        throw std::invalid_argument("MecConfig: momentum outside [0,1]");
}

namespace {

Matrix init_linear(std::size_t in, std::size_t out, Rng& rng) {
    Matrix w(in, out);
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.gaussian() * s;
    return w;
}

}  // namespace

ProjectionHeads ProjectionHeads::init(std::size_t t_dim, std::size_t a_dim, std::size_t v_dim,
                                      std::size_t proj_dim, Rng& rng) {
    ProjectionHeads h;
    h.w_t = init_linear(t_dim, proj_dim, rng);
    h.b_t = Matrix(1, proj_dim);
    h.w_a = init_linear(a_dim, proj_dim, rng);
    h.b_a = Matrix(1, proj_dim);
    h.w_v = init_linear(v_dim, proj_dim, rng);
    h.b_v = Matrix(1, proj_dim);
    return h;
}

Matrix ProjectionHeads::project(const Matrix& x, const Matrix& w, const Matrix& b) {
    Matrix y = mm_nn(x, w);
    for (std::size_t i = 0; i < y.rows(); ++i)
        for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += b(0, j);
    return l2_normalize_rows(y);
}

void momentum_update(const ProjectionHeads& online, MomentumHeads& mom, double m) {
    auto ema = [m](const Matrix& theta, Matrix& theta_m) {
        if (!theta.same_shape(theta_m))
            throw std::invalid_argument("momentum_update: shape mismatch");
        for (std::size_t i = 0; i < theta.size(); ++i)
            theta_m.data()[i] = m * theta_m.data()[i] + (1.0 - m) * theta.data()[i];
    };
    ema(online.w_t, mom.w_t);
    ema(online.b_t, mom.b_t);
    ema(online.w_a, mom.w_a);
    ema(online.b_a, mom.b_a);
    ema(online.w_v, mom.w_v);
    ema(online.b_v, mom.b_v);
}

void NegativeQueue::enqueue(const Matrix& rows) {
    if (rows.rows() == 0) return;
    if (rows.cols() != dim_) throw std::invalid_argument("NegativeQueue: wrong row dim");
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        for (std::size_t j = 0; j < dim_; ++j) storage_(head_, j) = rows(i, j);
        head_ = (head_ + 1) % capacity_;
        if (fill_ < capacity_) ++fill_;
    }
}

Matrix NegativeQueue::snapshot() const {
    Matrix out(fill_, dim_);
    // Oldest entry sits at head_ when full, at 0 otherwise.
    const std::size_t start = (fill_ == capacity_) ? head_ : 0;
    for (std::size_t i = 0; i < fill_; ++i) {
        const std::size_t src = (start + i) % capacity_;
        for (std::size_t j = 0; j < dim_; ++j) out(i, j) = storage_(src, j);
    }
    return out;
}

double similarity(const Matrix& q, const Matrix& k) {
    if (q.rows() != 1 || k.rows() != 1 || q.cols() != k.cols())
        throw std::invalid_argument("similarity: expects two 1 x d rows");
    double dot = 0.0;
    for (std::size_t j = 0; j < q.cols(); ++j) dot += q(0, j) * k(0, j);
    return dot;
}

Var project_on_tape(Tape& tape, Var features, Var w, Var b) {
    return tape.l2_normalize_rows(tape.add_row_broadcast(tape.matmul(features, w), b));
}

Var info_nce_term(Tape& tape, Var anchors, const Matrix& positives, const Matrix& queue,
                  double tau) {
    const Matrix& a = tape.value(anchors);
    if (a.rows() == 0) throw std::invalid_argument("info_nce_term: empty batch");
    if (!a.same_shape(positives))
        throw std::invalid_argument("info_nce_term: positive shape mismatch");
    // pos_i = <anchor_i, positive_i>
    Var pos = tape.row_sums(tape.hadamard(anchors, tape.constant(positives)));
    Var logits = pos;  // b x 1
    if (queue.rows() > 0) {
        Var neg = tape.matmul_nt(anchors, tape.constant(queue));  // b x fill
        logits = tape.concat_cols(pos, neg);
    }
    // term_i = logsumexp(logits_i / tau) - pos_i / tau
    Var lse = tape.logsumexp_rows(tape.scale(logits, 1.0 / tau));
    return tape.add(lse, tape.scale(pos, -1.0 / tau));  // b x 1
}

Var mec_loss(Tape& tape, Var t_hat, Var a_hat, Var v_hat, const Matrix& mom_t,
             const Matrix& mom_a, const Matrix& mom_v, const NegativeQueue& queue_t,
             const NegativeQueue& queue_a, const NegativeQueue& queue_v, const MecConfig& cfg) {
    const Matrix snap_t = queue_t.snapshot();
    const Matrix snap_a = queue_a.snapshot();
    const Matrix snap_v = queue_v.snapshot();
    Var total = tape.add(
        tape.add(info_nce_term(tape, t_hat, mom_a, snap_a, cfg.tau),
                 info_nce_term(tape, a_hat, mom_v, snap_v, cfg.tau)),
        info_nce_term(tape, t_hat, mom_v, snap_v, cfg.tau));
    if (cfg.symmetric) {
        Var mirror = tape.add(
            tape.add(info_nce_term(tape, a_hat, mom_t, snap_t, cfg.tau),
                     info_nce_term(tape, v_hat, mom_a, snap_a, cfg.tau)),
            info_nce_term(tape, v_hat, mom_t, snap_t, cfg.tau));
        total = tape.add(total, mirror);
    }
    return tape.mean_all(total);
}

AlignmentState::AlignmentState(std::size_t t_dim, std::size_t a_dim, std::size_t v_dim,
                               std::size_t proj_dim, const MecConfig& mec, Rng& rng)
    : online(ProjectionHeads::init(t_dim, a_dim, v_dim, proj_dim, rng)),
      momentum(online),
      queue_t(mec.capacity, proj_dim),
      queue_a(mec.capacity, proj_dim),
      queue_v(mec.capacity, proj_dim),
      cfg(mec) {
    cfg.validate();
}

void AlignmentState::finish_step(const Matrix& mom_t, const Matrix& mom_a, const Matrix& mom_v) {
    momentum_update(online, momentum, cfg.momentum);
    queue_t.enqueue(mom_t);
    queue_a.enqueue(mom_a);
    queue_v.enqueue(mom_v);
}

}  // namespace matav
