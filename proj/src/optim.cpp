#include "childgrad/optim.hpp"

#include <cmath>
#include <limits>

#include "childgrad/error.hpp"
#include "childgrad/numeric.hpp"

namespace childgrad {

void OptimConfig::validate() const {
    if (!(eta > 0.0)) throw ConfigError("optim.eta must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("optim.beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("optim.beta2 must lie in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("optim.eps must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("optim.weight_decay must be nonnegative");
    if (total_steps == 0) throw ConfigError("optim.total_steps must be positive");
    if (warmup_steps > total_steps) throw ConfigError("optim.warmup_steps exceeds total_steps");
}

void child_tuning_adam_step(std::span<double> params, std::span<const double> grads, const GradMask& mask,
                            AdamState& state, const OptimConfig& config, double lr) {
    const std::size_t n = params.size();
    if (grads.size() != n || mask.size() != n || state.m.size() != n || state.v.size() != n) {
        throw ShapeError("adam step: parameters, gradients, mask and moments are not aligned");
    }
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw NumericError("adam step: learning rate must be finite and >= 0");
    if (!(config.eps >= 0.0)) throw ConfigError("adam step: eps must be nonnegative");
    if (!all_finite(grads) || !all_finite(params)) throw NumericError("adam step: non-finite input");
    if (state.t == std::numeric_limits<std::uint64_t>::max()) throw NumericError("adam step: step counter overflow");

    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double b1 = config.beta1;
    const double b2 = config.beta2;
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    auto scales = mask.scales();
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grads[i] * scales[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        const double denom = std::sqrt(v_hat) + config.eps;
        if (denom > 0.0) params[i] -= lr * m_hat / denom;
        if (config.weight_decay > 0.0 && scales[i] > 0.0) params[i] -= lr * config.weight_decay * params[i];
    }
}

std::vector<double> sgd_masked_step(std::span<const double> params, std::span<const double> grads,
                                    const GradMask& mask, double eta) {
    if (grads.size() != params.size() || mask.size() != params.size()) {
        throw ShapeError("sgd step: parameters, gradients and mask are not aligned");
    }
    std::vector<double> out(params.begin(), params.end());
    auto scales = mask.scales();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= eta * (grads[i] * scales[i]);
    return out;
}

double lr_schedule(std::size_t step, const OptimConfig& config) {
    config.validate();
    if (step > config.total_steps) {
        throw ConfigError("lr_schedule: step " + std::to_string(step) + " beyond total_steps");
    }
    if (step < config.warmup_steps) {
        return config.eta * static_cast<double>(step) / static_cast<double>(config.warmup_steps);
    }
    if (config.total_steps == config.warmup_steps) return config.eta;
    return config.eta * static_cast<double>(config.total_steps - step) /
           static_cast<double>(config.total_steps - config.warmup_steps);
}

std::vector<double> clip_global_norm(std::span<const double> grads, double max_norm) {
    if (!(max_norm > 0.0)) throw ConfigError("clip_global_norm: max_norm must be positive");
    std::vector<double> out(grads.begin(), grads.end());
    const double norm = l2_norm(grads);
    if (norm <= max_norm) return out;
    const double scale = max_norm / norm;
    for (double& g : out) g *= scale;
    return out;
}

Penalty weight_decay_to_pretrained_loss(std::span<const double> params, std::span<const double> w0,
                                        double lambda) {
    if (params.size() != w0.size()) throw ShapeError("weight decay penalty: parameters and w0 are not aligned");
    if (!(lambda >= 0.0)) throw ConfigError("weight decay penalty: lambda must be nonnegative");
    Penalty out;
    out.grad.resize(params.size());
    std::vector<double> sq(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double d = params[i] - w0[i];
        sq[i] = d * d;
        out.grad[i] = 2.0 * lambda * d;
    }
    out.value = lambda * pairwise_sum(sq);
    return out;
}

}  // namespace childgrad
