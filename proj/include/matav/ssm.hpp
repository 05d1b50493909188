#pragma once

#include <cstddef>
#include <utility>

#include "matav/matrix.hpp"
#include "matav/rng.hpp"
#include "matav/tape.hpp"

namespace matav {

// Inputs to the selective scan. Per step t and channel d the recurrence over
// the N-dim state is
//   h_t = exp(delta_{t,d} * A_{d,:}) (.) h_{t-1} + delta_{t,d} * B_{t,:} * x_{t,d}
//   y_{t,d} = <C_{t,:}, h_t(d,:)>
// with h_0 = 0.
struct ScanInputs {
    Matrix x;      // n x d
    Matrix delta;  // n x d, strictly positive
    Matrix b;      // n x N
    Matrix c;      // n x N
    Matrix a;      // d x N, strictly negative

    std::size_t steps() const { return x.rows(); }
    std::size_t channels() const { return x.cols(); }
    std::size_t state_dim() const { return a.cols(); }
    void validate() const;
};

struct ScanGrads {
    Matrix dx, ddelta, db, dc, da;
};

// Single-step discretization: abar = exp(delta * a), bbar = delta * b.
std::pair<double, double> discretize(double a, double delta, double b);

Matrix scan_sequential(const ScanInputs& in);

// Chunked scan: each chunk's affine state map (elementwise decay product,
// accumulated response) is computed independently, maps are composed left to
// right, then outputs are rematerialized per chunk from the entering state.
// Chunk phases run on worker threads; the combine is sequential, so results
// do not depend on the thread count. n_chunks is clamped to [1, n]; with a
// single chunk the result is bitwise equal to scan_sequential.
Matrix scan_chunked(const ScanInputs& in, std::size_t n_chunks);

// Adjoint of the recurrence. States are recomputed per chunk from stored
// chunk-boundary states, bounding memory at O(n_chunks * d * N + chunk * d * N).
ScanGrads scan_backward(const ScanInputs& in, const Matrix& dy, std::size_t n_chunks);

// Selective state-space block parameters.
struct SsmBlock {
    Matrix a_log;        // d_model x N; A = -exp(a_log)
    Matrix w_delta, b_delta;  // d_model x d_model, 1 x d_model
    Matrix w_b, w_c;     // d_model x N
    Matrix w_z;          // d_model x d_model gate projection
    Matrix w_out;        // d_model x d_model

    std::size_t d_model() const { return a_log.rows(); }
    std::size_t d_state() const { return a_log.cols(); }

    // A init: A_{d,n} = -(n+1); delta bias set so softplus lands in
    // [0.001, 0.1] (log-uniform per channel).
    static SsmBlock init(std::size_t d_model, std::size_t d_state, Rng& rng);
};

struct SsmBlockVars {
    Var a_log, w_delta, b_delta, w_b, w_c, w_z, w_out;
};

// Scan as a tape node with a hand-written adjoint. a must already be the
// negative matrix (e.g. -exp(a_log) built from tape ops).
Var ssm_scan(Tape& tape, Var x, Var delta, Var b, Var c, Var a, std::size_t n_chunks);

// Full block: delta = softplus(Z W_delta + b_delta), B = Z W_b, C = Z W_c,
// y = scan, F = (y (.) silu(Z W_z)) W_out.
Var ssm_block_forward(Tape& tape, const SsmBlockVars& vars, Var z, std::size_t n_chunks = 1);

// Inference-path forward without a tape.
Matrix ssm_block_forward(const SsmBlock& block, const Matrix& z, std::size_t n_chunks = 1);

}  // namespace matav
