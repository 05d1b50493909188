#include "matav/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace matav {

void AdamState::step(std::vector<Matrix*>& params, const std::vector<Matrix>& grads) {
    if (params.size() != grads.size())
        throw std::invalid_argument("adam_step: param/grad count mismatch");
    if (m_.empty()) {
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (const Matrix* p : params) {
            m_.emplace_back(p->rows(), p->cols());
            v_.emplace_back(p->rows(), p->cols());
        }
    }
    if (m_.size() != params.size())
        throw std::invalid_argument("adam_step: parameter count changed between steps");
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Matrix& p = *params[k];
        const Matrix& g = grads[k];
        if (!p.same_shape(g)) throw std::invalid_argument("adam_step: shape mismatch");
        double* pd = p.data();
        const double* gd = g.data();
        // Decoupled weight decay, applied before the optimizer delta.
        if (cfg_.weight_decay != 0.0)
            for (std::size_t i = 0; i < p.size(); ++i)
                pd[i] -= cfg_.lr * cfg_.weight_decay * pd[i];
        if (cfg_.use_sgd) {
            for (std::size_t i = 0; i < p.size(); ++i) pd[i] -= cfg_.lr * gd[i];
            continue;
        }
        double* md = m_[k].data();
        double* vd = v_[k].data();
        for (std::size_t i = 0; i < p.size(); ++i) {
            md[i] = cfg_.beta1 * md[i] + (1.0 - cfg_.beta1) * gd[i];
            vd[i] = cfg_.beta2 * vd[i] + (1.0 - cfg_.beta2) * gd[i] * gd[i];
            const double mhat = md[i] / bc1;
            const double vhat = vd[i] / bc2;
            pd[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace matav
