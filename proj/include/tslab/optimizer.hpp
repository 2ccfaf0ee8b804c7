#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "tslab/nn.hpp"

namespace tslab {

// SGD with momentum and L2 weight decay added to the gradient, plus a
// cosine learning-rate schedule with warm restarts. Decay skips biases
// unless decay_biases is set.
struct OptimizerState {
    double learning_rate_base = 0.01;  // stable for the desk-scale MLP; full runs collapse at 0.1
    double momentum = 0.9;
    double weight_decay = 1e-4;
    bool decay_biases = false;
    std::vector<int> restart_epochs = {200, 400};
    int warmup_epochs = 1;
    std::vector<double> velocity;
    std::size_t update_begin = 0;  // first parameter index updated; lets a probe train the head only

    void validate() const {
        if (learning_rate_base < 0.0) throw std::invalid_argument("optimizer: negative base lr");
        if (warmup_epochs < 0) throw std::invalid_argument("optimizer: negative warmup");
        for (std::size_t i = 1; i < restart_epochs.size(); ++i)
            if (restart_epochs[i] <= restart_epochs[i - 1])
                throw std::invalid_argument("optimizer: restart epochs must be increasing");
    }
};

// velocity <- momentum*velocity + (grad + weight_decay*param)
// param    <- param - lr*velocity
// Gradients are cleared afterwards.
inline void sgd_step(Network& net, OptimizerState& opt, double lr) {
    auto params = net.params();
    auto grads = net.grads();
    if (opt.velocity.empty()) opt.velocity.assign(params.size(), 0.0);
    if (opt.velocity.size() != params.size())
        throw std::invalid_argument("sgd_step: velocity/param size mismatch");
    const auto& bias = net.bias_mask();
    for (std::size_t i = opt.update_begin; i < params.size(); ++i) {
        if (!std::isfinite(grads[i]))
            throw std::runtime_error("sgd_step: non-finite gradient at parameter " +
                                     std::to_string(i));
        double g = grads[i];
        if (opt.weight_decay != 0.0 && (opt.decay_biases || !bias[i]))
            g += opt.weight_decay * params[i];
        opt.velocity[i] = opt.momentum * opt.velocity[i] + g;
        params[i] -= lr * opt.velocity[i];
    }
    net.zero_grads();
    net.note_params_changed();
}

// Learning rate for a 1-indexed epoch. A restart at epoch r begins a new
// cycle at r. Within a cycle of length L starting at s: warmup epochs ramp
// linearly toward base (reaching it at the first post-warmup epoch), the
// rest follows (1+cos(pi*(e-s-W)/(L-W)))/2 down to ~0 at the cycle end.
inline double lr_at(const OptimizerState& opt, int epoch, int total_epochs) {
    opt.validate();
    if (epoch < 1 || epoch > total_epochs)
        throw std::domain_error("lr_at: epoch " + std::to_string(epoch) + " outside [1, " +
                                std::to_string(total_epochs) + "]");
    int cycle_start = 1;
    int cycle_end = total_epochs;
    for (std::size_t i = 0; i <= opt.restart_epochs.size(); ++i) {
        const int start = i == 0 ? 1 : opt.restart_epochs[i - 1];
        const int end = i == opt.restart_epochs.size()
                            ? total_epochs
                            : std::min(opt.restart_epochs[i] - 1, total_epochs);
        if (start > total_epochs) break;
        if (epoch >= start && epoch <= end) {
            cycle_start = start;
            cycle_end = end;
            break;
        }
    }
    const int len = cycle_end - cycle_start + 1;
    const int pos = epoch - cycle_start;  // 0-based within the cycle
    const int warmup = std::min(opt.warmup_epochs, len - 1);
    if (pos < warmup) {
        return opt.learning_rate_base * static_cast<double>(pos + 1) /
               static_cast<double>(warmup + 1);
    }
    constexpr double kPi = 3.141592653589793238462643383279502884;
    const double phase = static_cast<double>(pos - warmup) / static_cast<double>(len - warmup);
    return opt.learning_rate_base * 0.5 * (1.0 + std::cos(kPi * phase));
}

}  // namespace tslab
