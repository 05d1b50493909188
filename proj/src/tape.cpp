#include "matav/tape.hpp"

#include <algorithm>
#include <cmath>

namespace matav {

namespace {

double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

double softplus_scalar(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }

}  // namespace

Matrix softmax_rows(const Matrix& x) {
    if (!x.all_finite()) throw std::invalid_argument("softmax_rows: non-finite input");
    Matrix y(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* xi = x.row(i);
        double* yi = y.row(i);
        double mx = xi[0];
        for (std::size_t j = 1; j < x.cols(); ++j) mx = std::max(mx, xi[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) {
            yi[j] = std::exp(xi[j] - mx);
            sum += yi[j];
        }
        for (std::size_t j = 0; j < x.cols(); ++j) yi[j] /= sum;
    }
    return y;
}

Matrix l2_normalize_rows(const Matrix& x) {
    Matrix y(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* xi = x.row(i);
        double norm2 = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) norm2 += xi[j] * xi[j];
        const double norm = std::sqrt(norm2);
        if (norm == 0.0) throw std::invalid_argument("l2_normalize_rows: zero-norm row");
        for (std::size_t j = 0; j < x.cols(); ++j) y(i, j) = xi[j] / norm;
    }
    return y;
}

Matrix silu(const Matrix& x) {
    Matrix y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = x.data()[i] * sigmoid(x.data()[i]);
    return y;
}

Matrix softplus(const Matrix& x) {
    Matrix y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = softplus_scalar(x.data()[i]);
    return y;
}

double cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
    if (logits.rows() == 0) throw std::invalid_argument("cross_entropy: empty batch");
    if (labels.size() != logits.rows())
        throw std::invalid_argument("cross_entropy: label count mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const int lab = labels[i];
        if (lab < 0 || static_cast<std::size_t>(lab) >= logits.cols())
            throw std::invalid_argument("cross_entropy: label out of range");
        const double* xi = logits.row(i);
        double mx = xi[0];
        for (std::size_t j = 1; j < logits.cols(); ++j) mx = std::max(mx, xi[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) sum += std::exp(xi[j] - mx);
        total += mx + std::log(sum) - xi[lab];
    }
    return total / static_cast<double>(logits.rows());
}

Var Tape::leaf(Matrix value) { return make_node(std::move(value), true, nullptr); }

Var Tape::constant(Matrix value) { return make_node(std::move(value), false, nullptr); }

Matrix Tape::grad(Var v) const {
    const Node& n = nodes_[v.id];
    if (n.grad.empty()) return Matrix(n.value.rows(), n.value.cols());
    return n.grad;
}

Var Tape::make_node(Matrix value, bool requires_grad, std::function<void(Tape&)> bw) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::set_backward(Var v, std::function<void(Tape&)> bw) {
    nodes_[v.id].backward = std::move(bw);
}

void Tape::accumulate(Var v, const Matrix& g) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (n.grad.empty())
        n.grad = g;
    else
        add_inplace(n.grad, g);
}

void Tape::accumulate(Var v, Matrix&& g) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (n.grad.empty())
        n.grad = std::move(g);
    else
        add_inplace(n.grad, g);
}

void Tape::backward(Var loss) {
    if (value(loss).rows() != 1 || value(loss).cols() != 1)
        throw std::invalid_argument("backward: loss must be a 1x1 scalar");
    Matrix seed(1, 1);
    seed(0, 0) = 1.0;
    nodes_[loss.id].grad = seed;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.backward && !n.grad.empty() && n.requires_grad) n.backward(*this);
    }
}

Var Tape::matmul(Var a, Var b) {
    Matrix c = mm_nn(value(a), value(b));
    const bool rg = requires_grad(a) || requires_grad(b);
    Var out = make_node(std::move(c), rg, nullptr);
    if (rg)
        nodes_[out.id].backward = [out, a, b](Tape& t) {
            const Matrix& g = t.nodes_[out.id].grad;
            if (t.requires_grad(a)) t.accumulate(a, mm_nt(g, t.value(b)));
            if (t.requires_grad(b)) t.accumulate(b, mm_tn(t.value(a), g));
        };
    return out;
}

Var Tape::matmul_nt(Var a, Var b) {
    Matrix c = mm_nt(value(a), value(b));
    const bool rg = requires_grad(a) || requires_grad(b);
    Var out = make_node(std::move(c), rg, nullptr);
    if (rg)
        nodes_[out.id].backward = [out, a, b](Tape& t) {
            const Matrix& g = t.nodes_[out.id].grad;
            if (t.requires_grad(a)) t.accumulate(a, mm_nn(g, t.value(b)));
            if (t.requires_grad(b)) t.accumulate(b, mm_tn(g, t.value(a)));
        };
    return out;
}

Var Tape::add(Var a, Var b) {
    Matrix c = matav::add(value(a), value(b));
    const bool rg = requires_grad(a) || requires_grad(b);
    Var out = make_node(std::move(c), rg, nullptr);
    if (rg)
        nodes_[out.id].backward = [out, a, b](Tape& t) {
            const Matrix& g = t.nodes_[out.id].grad;
            t.accumulate(a, g);
            t.accumulate(b, g);
        };
    return out;
}

Var Tape::add_row_broadcast(Var a, Var row) {
    const Matrix& A = value(a);
    const Matrix& R = value(row);
    if (R.rows() != 1 || R.cols() != A.cols())
        throw std::invalid_argument("add_row_broadcast: row shape mismatch");
    Matrix c = A;
    for (std::size_t i = 0; i < c.rows(); ++i)
        for (std::size_t j = 0; j < c.cols(); ++j) c(i, j) += R(0, j);
    const bool rg = requires_grad(a) || requires_grad(row);
    Var out = make_node(std::move(c), rg, nullptr);
    if (rg)
        nodes_[out.id].backward = [out, a, row](Tape& t) {
            const Matrix& g = t.nodes_[out.id].grad;
            t.accumulate(a, g);
            if (t.requires_grad(row)) {
                Matrix gr(1, g.cols());
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) gr(0, j) += g(i, j);
                t.accumulate(row, std::move(gr));
            }
        };
    return out;
}

Var Tape::scale(Var a, double c) {
    Var out = make_node(matav::scale(value(a), c), requires_grad(a), nullptr);
    if (requires_grad(a))
        nodes_[out.id].backward = [out, a, c](Tape& t) {
            t.accumulate(a, matav::scale(t.nodes_[out.id].grad, c));
        };
    return out;
}

Var Tape::hadamard(Var a, Var b) {
    Matrix c = matav::hadamard(value(a), value(b));
    const bool rg = requires_grad(a) || requires_grad(b);
    Var out = make_node(std::move(c), rg, nullptr);
    if (rg)
        nodes_[out.id].backward = [out, a, b](Tape& t) {
            const Matrix& g = t.nodes_[out.id].grad;
            if (t.requires_grad(a)) t.accumulate(a, matav::hadamard(g, t.value(b)));
            if (t.requires_grad(b)) t.accumulate(b, matav::hadamard(g, t.value(a)));
        };
    return out;
}

Var Tape::exp(Var a) {
    Matrix y = value(a);
    for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = std::exp(y.data()[i]);
    Var out = make_node(std::move(y), requires_grad(a), nullptr);
    if (requires_grad(a))
        nodes_[out.id].backward = [out, a](Tape& t) {
            t.accumulate(a, matav::hadamard(t.nodes_[out.id].grad, t.value(out)));
        };
    return out;
}

Var Tape::silu(Var a) {
    Var out = make_node(matav::silu(value(a)), requires_grad(a), nullptr);
    if (requires_grad(a))
        nodes_[out.id].backward = [out, a](Tape& t) {
            const Matrix& g = t.nodes_[out.id].grad;
            const Matrix& x = t.value(a);
            Matrix gx = g;
            for (std::size_t i = 0; i < gx.size(); ++i) {
                const double s = sigmoid(x.data()[i]);
                gx.data()[i] *= s * (1.0 + x.data()[i] * (1.0 - s));
            }
            t.accumulate(a, std::move(gx));
        };
    return out;
}

Var Tape::softplus(Var a) {
    Var out = make_node(matav::softplus(value(a)), requires_grad(a), nullptr);
    if (requires_grad(a))
        nodes_[out.id].backward = [out, a](Tape& t) {
            const Matrix& g = t.nodes_[out.id].grad;
            const Matrix& x = t.value(a);
            Matrix gx = g;
            for (std::size_t i = 0; i < gx.size(); ++i) gx.data()[i] *= sigmoid(x.data()[i]);
            t.accumulate(a, std::move(gx));
        };
    return out;
}

Var Tape::softmax_rows(Var a) {
    Var out = make_node(matav::softmax_rows(value(a)), requires_grad(a), nullptr);
    if (requires_grad(a))
        nodes_[out.id].backward = [out, a](Tape& t) {
            const Matrix& g = t.nodes_[out.id].grad;
            const Matrix& y = t.value(out);
            Matrix gx(g.rows(), g.cols());
            for (std::size_t i = 0; i < g.rows(); ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * y(i, j);
                for (std::size_t j = 0; j < g.cols(); ++j)
                    gx(i, j) = y(i, j) * (g(i, j) - dot);
            }
            t.accumulate(a, std::move(gx));
        };
    return out;
}

Var Tape::l2_normalize_rows(Var a) {
    Var out = make_node(matav::l2_normalize_rows(value(a)), requires_grad(a), nullptr);
    if (requires_grad(a))
        nodes_[out.id].backward = [out, a](Tape& t) {
            const Matrix& g = t.nodes_[out.id].grad;
            const Matrix& x = t.value(a);
            const Matrix& y = t.value(out);
            Matrix gx(g.rows(), g.cols());
            for (std::size_t i = 0; i < g.rows(); ++i) {
                double norm2 = 0.0, dot = 0.0;
                for (std::size_t j = 0; j < g.cols(); ++j) {
                    norm2 += x(i, j) * x(i, j);
                    dot += g(i, j) * y(i, j);
                }
                const double inv_norm = 1.0 / std::sqrt(norm2);
                for (std::size_t j = 0; j < g.cols(); ++j)
                    gx(i, j) = (g(i, j) - dot * y(i, j)) * inv_norm;
            }
            t.accumulate(a, std::move(gx));
        };
    return out;
}

Var Tape::logsumexp_rows(Var a) {
    const Matrix& x = value(a);
    Matrix y(x.rows(), 1);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* xi = x.row(i);
        double mx = xi[0];
        for (std::size_t j = 1; j < x.cols(); ++j) mx = std::max(mx, xi[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) sum += std::exp(xi[j] - mx);
        y(i, 0) = mx + std::log(sum);
    }
    Var out = make_node(std::move(y), requires_grad(a), nullptr);
    if (requires_grad(a))
        nodes_[out.id].backward = [out, a](Tape& t) {
            const Matrix& g = t.nodes_[out.id].grad;
            const Matrix& x = t.value(a);
            const Matrix& lse = t.value(out);
            Matrix gx(x.rows(), x.cols());
            for (std::size_t i = 0; i < x.rows(); ++i)
                for (std::size_t j = 0; j < x.cols(); ++j)
                    gx(i, j) = g(i, 0) * std::exp(x(i, j) - lse(i, 0));
            t.accumulate(a, std::move(gx));
        };
    return out;
}

Var Tape::row_sums(Var a) {
    const Matrix& x = value(a);
    Matrix y(x.rows(), 1);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) y(i, 0) += x(i, j);
    Var out = make_node(std::move(y), requires_grad(a), nullptr);
    if (requires_grad(a))
        nodes_[out.id].backward = [out, a](Tape& t) {
            const Matrix& g = t.nodes_[out.id].grad;
            const Matrix& x = t.value(a);
            Matrix gx(x.rows(), x.cols());
            for (std::size_t i = 0; i < x.rows(); ++i)
                for (std::size_t j = 0; j < x.cols(); ++j) gx(i, j) = g(i, 0);
            t.accumulate(a, std::move(gx));
        };
    return out;
}

Var Tape::concat_cols(Var a, Var b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    if (A.rows() != B.rows()) throw std::invalid_argument("concat_cols: row count mismatch");
    Matrix c(A.rows(), A.cols() + B.cols());
    for (std::size_t i = 0; i < A.rows(); ++i) {
        for (std::size_t j = 0; j < A.cols(); ++j) c(i, j) = A(i, j);
        for (std::size_t j = 0; j < B.cols(); ++j) c(i, A.cols() + j) = B(i, j);
    }
    const bool rg = requires_grad(a) || requires_grad(b);
    Var out = make_node(std::move(c), rg, nullptr);
    if (rg)
        nodes_[out.id].backward = [out, a, b](Tape& t) {
            const Matrix& g = t.nodes_[out.id].grad;
            const std::size_t ac = t.value(a).cols();
            if (t.requires_grad(a)) {
                Matrix ga(g.rows(), ac);
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < ac; ++j) ga(i, j) = g(i, j);
                t.accumulate(a, std::move(ga));
            }
            if (t.requires_grad(b)) {
                Matrix gb(g.rows(), g.cols() - ac);
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < gb.cols(); ++j) gb(i, j) = g(i, ac + j);
                t.accumulate(b, std::move(gb));
            }
        };
    return out;
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
    const std::size_t cols = value(parts[0]).cols();
    std::size_t total = 0;
    bool rg = false;
    for (Var p : parts) {
        if (value(p).cols() != cols)
            throw std::invalid_argument("concat_rows: column count mismatch");
        total += value(p).rows();
        rg = rg || requires_grad(p);
    }
    Matrix c(total, cols);
    std::size_t at = 0;
    for (Var p : parts) {
        const Matrix& P = value(p);
        for (std::size_t i = 0; i < P.rows(); ++i)
            for (std::size_t j = 0; j < cols; ++j) c(at + i, j) = P(i, j);
        at += P.rows();
    }
    Var out = make_node(std::move(c), rg, nullptr);
    if (rg) {
        std::vector<Var> ps = parts;
        nodes_[out.id].backward = [out, ps](Tape& t) {
            const Matrix& g = t.nodes_[out.id].grad;
            std::size_t at = 0;
            for (Var p : ps) {
                const std::size_t r = t.value(p).rows();
                if (t.requires_grad(p)) {
                    Matrix gp(r, g.cols());
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < g.cols(); ++j) gp(i, j) = g(at + i, j);
                    t.accumulate(p, std::move(gp));
                }
                at += r;
            }
        };
    }
    return out;
}

Var Tape::sum_all(Var a) {
    const Matrix& x = value(a);
    Matrix y(1, 1);
    for (std::size_t i = 0; i < x.size(); ++i) y(0, 0) += x.data()[i];
    Var out = make_node(std::move(y), requires_grad(a), nullptr);
    if (requires_grad(a))
        nodes_[out.id].backward = [out, a](Tape& t) {
            const double g = t.nodes_[out.id].grad(0, 0);
            const Matrix& x = t.value(a);
            t.accumulate(a, Matrix(x.rows(), x.cols(), g));
        };
    return out;
}

Var Tape::mean_all(Var a) {
    const std::size_t n = value(a).size();
    Var s = sum_all(a);
    return scale(s, 1.0 / static_cast<double>(n));
}

Var Tape::cross_entropy(Var logits, const std::vector<int>& labels) {
    const Matrix& L = value(logits);
    Matrix loss(1, 1);
    loss(0, 0) = matav::cross_entropy(L, labels);
    Var out = make_node(std::move(loss), requires_grad(logits), nullptr);
    if (requires_grad(logits)) {
        std::vector<int> labs = labels;
        nodes_[out.id].backward = [out, logits, labs](Tape& t) {
            const double g = t.nodes_[out.id].grad(0, 0);
            const Matrix& L = t.value(logits);
            Matrix probs = matav::softmax_rows(L);
            const double inv_n = 1.0 / static_cast<double>(L.rows());
            for (std::size_t i = 0; i < L.rows(); ++i) {
                for (std::size_t j = 0; j < L.cols(); ++j) probs(i, j) *= g * inv_n;
                probs(i, labs[i]) -= g * inv_n;
            }
            t.accumulate(logits, std::move(probs));
        };
    }
    return out;
}

}  // namespace matav
