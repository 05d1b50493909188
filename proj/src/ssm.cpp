#include "matav/ssm.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "matav/threading.hpp"

namespace matav {

void ScanInputs::validate() const {
    const std::size_t n = steps(), d = channels(), N = state_dim();
    if (delta.rows() != n || delta.cols() != d)
        throw std::invalid_argument("ScanInputs: delta shape mismatch");
    if (b.rows() != n || b.cols() != N) throw std::invalid_argument("ScanInputs: b shape mismatch");
    if (c.rows() != n || c.cols() != N) throw std::invalid_argument("ScanInputs: c shape mismatch");
    if (a.rows() != d) throw std::invalid_argument("ScanInputs: a shape mismatch");
    for (std::size_t i = 0; i < delta.size(); ++i)
        if (!(delta.data()[i] > 0.0)) throw std::invalid_argument("ScanInputs: delta must be > 0");
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!(a.data()[i] < 0.0)) throw std::invalid_argument("ScanInputs: a must be < 0");
}

std::pair<double, double> discretize(double a, double delta, double b) {
    if (!(delta > 0.0)) throw std::invalid_argument("discretize: delta must be > 0");
    return {std::exp(delta * a), delta * b};
}

namespace {

// Advances h over steps [t0, t1), optionally emitting y rows and tracking
// the elementwise decay product p (the state-to-state part of the chunk's
// affine map). This is the single step kernel shared by every scan path, so
// sequential and chunked results agree bitwise where the entering states do.
void run_steps(const ScanInputs& in, std::size_t t0, std::size_t t1, Matrix& h, Matrix* y,
               Matrix* p) {
    const std::size_t d = in.channels(), N = in.state_dim();
    for (std::size_t t = t0; t < t1; ++t) {
        const double* bt = in.b.row(t);
        const double* ct = in.c.row(t);
        for (std::size_t dd = 0; dd < d; ++dd) {
            const double dt = in.delta(t, dd);
            const double xv = in.x(t, dd);
            double* hd = h.row(dd);
            const double* ad = in.a.row(dd);
            double acc = 0.0;
            if (p) {
                double* pd = p->row(dd);
                for (std::size_t nn = 0; nn < N; ++nn) {
                    const double abar = std::exp(dt * ad[nn]);
                    hd[nn] = abar * hd[nn] + dt * bt[nn] * xv;
                    pd[nn] *= abar;
                    acc += ct[nn] * hd[nn];
                }
            } else {
                for (std::size_t nn = 0; nn < N; ++nn) {
                    const double abar = std::exp(dt * ad[nn]);
                    hd[nn] = abar * hd[nn] + dt * bt[nn] * xv;
                    acc += ct[nn] * hd[nn];
                }
            }
            if (y) (*y)(t, dd) = acc;
        }
    }
}

std::vector<std::size_t> chunk_bounds(std::size_t n, std::size_t n_chunks) {
    std::vector<std::size_t> bounds(n_chunks + 1, 0);
    const std::size_t base = n / n_chunks, rem = n % n_chunks;
    for (std::size_t c = 0; c < n_chunks; ++c)
        bounds[c + 1] = bounds[c] + base + (c < rem ? 1 : 0);
    return bounds;
}

}  // namespace

Matrix scan_sequential(const ScanInputs& in) {
    in.validate();
    Matrix h(in.channels(), in.state_dim());
    Matrix y(in.steps(), in.channels());
    run_steps(in, 0, in.steps(), h, &y, nullptr);
    return y;
}

Matrix scan_chunked(const ScanInputs& in, std::size_t n_chunks) {
    in.validate();
    const std::size_t n = in.steps(), d = in.channels(), N = in.state_dim();
    if (n_chunks < 1) throw std::invalid_argument("scan_chunked: n_chunks < 1");
    n_chunks = std::min(n_chunks, n);
    if (n_chunks == 1) return scan_sequential(in);

    const auto bounds = chunk_bounds(n, n_chunks);

    // Phase 1: per-chunk affine maps (decay product p, zero-state response q).
    std::vector<Matrix> p(n_chunks), q(n_chunks);
    parallel_for(n_chunks - 1, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t c = lo; c < hi; ++c) {
            p[c] = Matrix(d, N, 1.0);
            q[c] = Matrix(d, N);
            run_steps(in, bounds[c], bounds[c + 1], q[c], nullptr, &p[c]);
        }
    });

    // Phase 2: sequential composition (a2,b2) o (a1,b1) = (a2 a1, a2 b1 + b2).
    std::vector<Matrix> enter(n_chunks);
    enter[0] = Matrix(d, N);
    for (std::size_t c = 1; c < n_chunks; ++c) {
        enter[c] = Matrix(d, N);
        for (std::size_t i = 0; i < enter[c].size(); ++i)
            enter[c].data()[i] = p[c - 1].data()[i] * enter[c - 1].data()[i] + q[c - 1].data()[i];
    }

    // Phase 3: rematerialize outputs from each chunk's entering state.
    Matrix y(n, d);
    parallel_for(n_chunks, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t c = lo; c < hi; ++c) {
            Matrix h = enter[c];
            run_steps(in, bounds[c], bounds[c + 1], h, &y, nullptr);
        }
    });
    return y;
}

ScanGrads scan_backward(const ScanInputs& in, const Matrix& dy, std::size_t n_chunks) {
    in.validate();
    const std::size_t n = in.steps(), d = in.channels(), N = in.state_dim();
    if (dy.rows() != n || dy.cols() != d)
        throw std::invalid_argument("scan_backward: dy shape mismatch");
    n_chunks = std::max<std::size_t>(1, std::min(n_chunks, n));
    const auto bounds = chunk_bounds(n, n_chunks);

    // Forward pass storing chunk-boundary states only.
    std::vector<Matrix> enter(n_chunks);
    {
        Matrix h(d, N);
        for (std::size_t c = 0; c < n_chunks; ++c) {
            enter[c] = h;
            run_steps(in, bounds[c], bounds[c + 1], h, nullptr, nullptr);
        }
    }

    ScanGrads g;
    g.dx = Matrix(n, d);
    g.ddelta = Matrix(n, d);
    g.db = Matrix(n, N);
    g.dc = Matrix(n, N);
    g.da = Matrix(d, N);

    // Adjoint sweep, right to left. carry(dd,nn) = abar_{t+1} * lambda_{t+1}.
    Matrix carry(d, N);
    std::vector<Matrix> traj;  // h after each step within the current chunk
    for (std::size_t c = n_chunks; c-- > 0;) {
        const std::size_t t0 = bounds[c], t1 = bounds[c + 1];
        traj.assign(t1 - t0, Matrix());
        {
            Matrix h = enter[c];
            for (std::size_t t = t0; t < t1; ++t) {
                run_steps(in, t, t + 1, h, nullptr, nullptr);
                traj[t - t0] = h;
            }
        }
        for (std::size_t t = t1; t-- > t0;) {
            const Matrix& ht = traj[t - t0];
            const Matrix& hprev = (t == t0) ? enter[c] : traj[t - t0 - 1];
            const double* bt = in.b.row(t);
            const double* ct = in.c.row(t);
            double* dbt = g.db.row(t);
            double* dct = g.dc.row(t);
            for (std::size_t dd = 0; dd < d; ++dd) {
                const double dt = in.delta(t, dd);
                const double xv = in.x(t, dd);
                const double gy = dy(t, dd);
                const double* ad = in.a.row(dd);
                const double* hp = hprev.row(dd);
                const double* hc = ht.row(dd);
                double* cr = carry.row(dd);
                double* dad = g.da.row(dd);
                double accx = 0.0, accdt = 0.0;
                for (std::size_t nn = 0; nn < N; ++nn) {
                    const double lambda = ct[nn] * gy + cr[nn];
                    const double abar = std::exp(dt * ad[nn]);
                    accx += lambda * dt * bt[nn];
                    accdt += lambda * (ad[nn] * abar * hp[nn] + bt[nn] * xv);
                    dbt[nn] += lambda * dt * xv;
                    dct[nn] += gy * hc[nn];
                    dad[nn] += lambda * dt * abar * hp[nn];
                    cr[nn] = abar * lambda;
                }
                g.dx(t, dd) = accx;
                g.ddelta(t, dd) = accdt;
            }
        }
    }
    return g;
}

SsmBlock SsmBlock::init(std::size_t d_model, std::size_t d_state, Rng& rng) {
    SsmBlock blk;
    blk.a_log = Matrix(d_model, d_state);
    for (std::size_t dd = 0; dd < d_model; ++dd)
        for (std::size_t nn = 0; nn < d_state; ++nn)
            blk.a_log(dd, nn) = std::log(static_cast<double>(nn + 1));
    auto linear = [&rng](std::size_t in_dim, std::size_t out_dim) {
        Matrix w(in_dim, out_dim);
        const double s = 1.0 / std::sqrt(static_cast<double>(in_dim));
        for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.gaussian() * s;
        return w;
    };
    blk.w_delta = linear(d_model, d_model);
    blk.b_delta = Matrix(1, d_model);
    for (std::size_t dd = 0; dd < d_model; ++dd) {
        // softplus(b_delta) lands log-uniformly in [1e-3, 1e-1].
        const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
        blk.b_delta(0, dd) = std::log(std::expm1(dt));
    }
    blk.w_b = linear(d_model, d_state);
    blk.w_c = linear(d_model, d_state);
    blk.w_z = linear(d_model, d_model);
    blk.w_out = linear(d_model, d_model);
    return blk;
}

Var ssm_scan(Tape& tape, Var x, Var delta, Var b, Var c, Var a, std::size_t n_chunks) {
    ScanInputs in{tape.value(x), tape.value(delta), tape.value(b), tape.value(c), tape.value(a)};
    Matrix y = scan_chunked(in, n_chunks);
    const bool rg = tape.requires_grad(x) || tape.requires_grad(delta) ||
                    tape.requires_grad(b) || tape.requires_grad(c) || tape.requires_grad(a);
    Var out = tape.make_node(std::move(y), rg, nullptr);
    if (rg) {
        tape.set_backward(out, [out, x, delta, b, c, a, n_chunks](Tape& t) {
            ScanInputs in{t.value(x), t.value(delta), t.value(b), t.value(c), t.value(a)};
            ScanGrads g = scan_backward(in, t.grad(out), n_chunks);
            t.accumulate(x, std::move(g.dx));
            t.accumulate(delta, std::move(g.ddelta));
            t.accumulate(b, std::move(g.db));
            t.accumulate(c, std::move(g.dc));
            t.accumulate(a, std::move(g.da));
        });
    }
    return out;
}

Var ssm_block_forward(Tape& tape, const SsmBlockVars& vars, Var z, std::size_t n_chunks) {
    Var a = tape.scale(tape.exp(vars.a_log), -1.0);
    Var delta = tape.softplus(tape.add_row_broadcast(tape.matmul(z, vars.w_delta), vars.b_delta));
    Var b = tape.matmul(z, vars.w_b);
    Var c = tape.matmul(z, vars.w_c);
    Var y = ssm_scan(tape, z, delta, b, c, a, n_chunks);
    Var gate = tape.silu(tape.matmul(z, vars.w_z));
    return tape.matmul(tape.hadamard(y, gate), vars.w_out);
}

Matrix ssm_block_forward(const SsmBlock& block, const Matrix& z, std::size_t n_chunks) {
    Matrix a = block.a_log;
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] = -std::exp(a.data()[i]);
    Matrix delta_pre = mm_nn(z, block.w_delta);
    for (std::size_t i = 0; i < delta_pre.rows(); ++i)
        for (std::size_t j = 0; j < delta_pre.cols(); ++j)
            delta_pre(i, j) += block.b_delta(0, j);
    ScanInputs in{z, softplus(delta_pre), mm_nn(z, block.w_b), mm_nn(z, block.w_c), a};
    Matrix y = scan_chunked(in, n_chunks);
    Matrix gate = silu(mm_nn(z, block.w_z));
    return mm_nn(hadamard(y, gate), block.w_out);
}

}  // namespace matav
