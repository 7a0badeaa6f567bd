#pragma once

#include <cstddef>
#include <vector>

#include "rca/networks.hpp"

namespace rca {

enum class OptimizerKind { SgdMomentum, Adam };

struct OptimizerSpec {
    OptimizerKind kind = OptimizerKind::Adam;
    double learning_rate = 1e-3;
    // Step decay: lr *= decay_factor once per decay_step iterations; 0 disables.
    std::size_t decay_step = 0;
    double decay_factor = 0.1;
    double momentum = 0.9;  // SGD
    double beta1 = 0.5;     // Adam
    double beta2 = 0.999;
    double epsilon = 1e-8;
    // Coupled L2: the gradient gets weight_decay * w added before the update.
    double weight_decay = 1e-4;

    void validate() const;
    double learning_rate_at(std::size_t iteration) const;
    friend bool operator==(const OptimizerSpec&, const OptimizerSpec&) = default;
};

/// Optimizer state for one parameter group.
class GroupOptimizer {
public:
    GroupOptimizer() = default;
    GroupOptimizer(const OptimizerSpec& spec, const std::vector<Layer>& shape_like);

    void update(std::vector<Layer>& params, const std::vector<Layer>& grads, double learning_rate);
    std::size_t steps() const { return steps_; }

private:
    OptimizerSpec spec_;
    std::vector<Tensor> first_;
    std::vector<Tensor> second_;
    std::size_t steps_ = 0;
};

}  // namespace rca
