#include "rca/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace rca {

void OptimizerSpec::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight decay must be nonnegative");
    if (!(decay_factor > 0.0)) throw std::invalid_argument("decay factor must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw std::invalid_argument("Adam betas must be in [0, 1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("Adam epsilon must be positive");
}

double OptimizerSpec::learning_rate_at(std::size_t iteration) const {
    if (decay_step == 0) return learning_rate;
    return learning_rate * std::pow(decay_factor, static_cast<double>(iteration / decay_step));
}

GroupOptimizer::GroupOptimizer(const OptimizerSpec& spec, const std::vector<Layer>& shape_like) : spec_(spec) {
    for (const auto& layer : shape_like) {
        first_.push_back(Tensor::zeros_like(layer.weight));
        first_.push_back(Tensor::zeros_like(layer.bias));
    }
    if (spec.kind == OptimizerKind::Adam) second_ = first_;
}

void GroupOptimizer::update(std::vector<Layer>& params, const std::vector<Layer>& grads, double learning_rate) {
    if (params.size() * 2 != first_.size() || grads.size() != params.size())
        throw std::logic_error("optimizer state does not match the parameter group");
    ++steps_;
    const double bias1 = 1.0 - std::pow(spec_.beta1, static_cast<double>(steps_));
    const double bias2 = 1.0 - std::pow(spec_.beta2, static_cast<double>(steps_));

    auto apply = [&](Tensor& w, const Tensor& g, std::size_t slot) {
        auto m = first_[slot].data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double grad = g[i] + spec_.weight_decay * w[i];
            if (spec_.kind == OptimizerKind::SgdMomentum) {
                m[i] = spec_.momentum * m[i] + grad;
                w[i] -= learning_rate * m[i];
            } else {
                auto v = second_[slot].data();
                m[i] = spec_.beta1 * m[i] + (1.0 - spec_.beta1) * grad;
                v[i] = spec_.beta2 * v[i] + (1.0 - spec_.beta2) * grad * grad;
                w[i] -= learning_rate * (m[i] / bias1) / (std::sqrt(v[i] / bias2) + spec_.epsilon);
            }
        }
    };
    for (std::size_t l = 0; l < params.size(); ++l) {
        apply(params[l].weight, grads[l].weight, 2 * l);
        apply(params[l].bias, grads[l].bias, 2 * l + 1);
    }
}

}  // namespace rca
