#include "lvdiag/tensor/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace lvdiag {

AdamState AdamState::for_params(std::span<const Tensor> params, double beta1, double beta2, double epsilon) {
    AdamState s;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.epsilon = epsilon;
    for (const Tensor& p : params) {
        s.first_moment.emplace_back(p.shape());
        s.second_moment.emplace_back(p.shape());
    }
    return s;
}

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state, double lr) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size())
        throw ShapeError("adam_step: " + std::to_string(params.size()) + " params, " + std::to_string(grads.size()) +
                         " grads, " + std::to_string(state.first_moment.size()) + " moment slots");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].shape() != grads[i].shape() || params[i].shape() != state.first_moment[i].shape())
            throw ShapeError("adam_step: parameter " + std::to_string(i) + " shape " + shape_str(params[i].shape()) +
                             " vs gradient " + shape_str(grads[i].shape()));
    }
    ++state.step;
    const double t = double(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i].data();
        auto g = grads[i].data();
        auto m = state.first_moment[i].data();
        auto v = state.second_moment[i].data();
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            p[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + state.epsilon);
        }
    }
}

double lr_schedule(std::size_t epoch, double lr0, double decay) {
    if (!(lr0 > 0.0)) throw std::invalid_argument("lr_schedule: lr0 must be positive");
    return lr0 * std::exp(-decay * double(epoch));
}

} // namespace lvdiag
