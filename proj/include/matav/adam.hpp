#pragma once

#include <vector>

#include "matav/matrix.hpp"

namespace matav {

struct AdamConfig {
    double lr = 1e-4;
    double weight_decay = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    bool use_sgd = false;  // plain SGD with the same lr/decay, for ablation
};

// Bias-corrected Adam with decoupled weight decay. Moment buffers are
// allocated lazily on the first step so the state can be constructed before
// parameter shapes are known.
class AdamState {
public:
    explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }
    long step_count() const { return step_; }

    // params and grads are parallel lists; shapes must match position-wise.
    void step(std::vector<Matrix*>& params, const std::vector<Matrix>& grads);

private:
    AdamConfig cfg_;
    long step_ = 0;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
};

}  // namespace matav
