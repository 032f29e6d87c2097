#include "compseg/nn/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace compseg::nn {

Adam::Adam(ParamList params, AdamOptions options) : params_(std::move(params)), options_(options) {
    if (options_.learning_rate <= 0.0) throw std::invalid_argument("Adam: learning rate must be positive");
    for (const auto* p : params_) {
        m_.emplace_back(p->value.size(), 0.0);
        v_.emplace_back(p->value.size(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto& p = *params_[k];
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
            v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
            p.value[i] -= options_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.epsilon);
        }
    }
}

}  // namespace compseg::nn
