#pragma once

#include <vector>

#include "compseg/nn/layers.hpp"

namespace compseg::nn {

struct AdamOptions {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam with bias correction. Moment buffers are bound to the parameter list
/// given at construction; the list must outlive the optimizer.
class Adam {
public:
    Adam(ParamList params, AdamOptions options);

    void step();
    void zero_grad() { nn::zero_grad(params_); }
    long steps() const { return t_; }
    const AdamOptions& options() const { return options_; }

private:
    ParamList params_;
    AdamOptions options_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

}  // namespace compseg::nn
