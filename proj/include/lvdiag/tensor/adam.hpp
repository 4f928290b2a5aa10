#pragma once

#include "lvdiag/tensor/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace lvdiag {

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;

    /// Zeroed moments shaped like `params`.
    static AdamState for_params(std::span<const Tensor> params, double beta1 = 0.9, double beta2 = 0.999,
                                double epsilon = 1e-8);
};

/// One bias-corrected Adam update of `params` in place:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
///   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state, double lr);

/// lr0 * exp(-decay * epoch).
double lr_schedule(std::size_t epoch, double lr0, double decay = 0.05);

} // namespace lvdiag
