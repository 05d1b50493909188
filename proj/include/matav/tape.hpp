#pragma once

#include <functional>
#include <vector>

#include "matav/matrix.hpp"

namespace matav {

// Handle into a Tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape over a fixed forward graph. Ops append nodes in
// execution order; backward() replays them in exact reverse order and
// accumulates gradients additively. Constants never receive gradient.
class Tape {
public:
    Var leaf(Matrix value);      // trainable input
    Var constant(Matrix value);  // no gradient flows into this node

    const Matrix& value(Var v) const { return nodes_[v.id].value; }
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
    // Gradient of the last backward() target w.r.t. v; zeros if untouched.
    Matrix grad(Var v) const;

    // --- primitive ops ---
    Var matmul(Var a, Var b);     // A B
    Var matmul_nt(Var a, Var b);  // A B^T
    Var add(Var a, Var b);
    Var add_row_broadcast(Var a, Var row);  // (n x d) + (1 x d) per row
    Var scale(Var a, double c);
    Var hadamard(Var a, Var b);
    Var exp(Var a);
    Var silu(Var a);      // x * sigmoid(x)
    Var softplus(Var a);  // log(1 + exp(x)), overflow-safe
    Var softmax_rows(Var a);
    Var l2_normalize_rows(Var a);
    Var logsumexp_rows(Var a);  // (n x k) -> (n x 1)
    Var row_sums(Var a);        // (n x k) -> (n x 1)
    Var concat_cols(Var a, Var b);
    Var concat_rows(const std::vector<Var>& parts);
    Var sum_all(Var a);   // -> 1x1
    Var mean_all(Var a);  // -> 1x1
    // Mean over rows of -log softmax(logits)[label]. -> 1x1
    Var cross_entropy(Var logits, const std::vector<int>& labels);

    // Seeds d(loss)/d(loss) = 1 and runs the reverse sweep. loss must be 1x1.
    void backward(Var loss);

    // Low-level hook for ops with hand-written adjoints (the SSM scan).
    Var make_node(Matrix value, bool requires_grad, std::function<void(Tape&)> bw);
    void set_backward(Var v, std::function<void(Tape&)> bw);
    void accumulate(Var v, const Matrix& g);
    void accumulate(Var v, Matrix&& g);

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;  // empty until first accumulation
        bool requires_grad = false;
        std::function<void(Tape&)> backward;
    };

    bool grad_present(Var v) const { return !nodes_[v.id].grad.empty(); }

    std::vector<Node> nodes_;
};

// Non-tape conveniences built on the same kernels (used by oracles and
// inference paths).
Matrix softmax_rows(const Matrix& x);
Matrix l2_normalize_rows(const Matrix& x);
Matrix silu(const Matrix& x);
Matrix softplus(const Matrix& x);
double cross_entropy(const Matrix& logits, const std::vector<int>& labels);

}  // namespace matav
