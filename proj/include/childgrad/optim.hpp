#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "childgrad/masking.hpp"

namespace childgrad {

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;

    static AdamState zeros(std::size_t n) { return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0}; }
    bool operator==(const AdamState&) const = default;
};

struct OptimConfig {
    double eta = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-6;
    double weight_decay = 0.0;  // decoupled
    std::size_t warmup_steps = 0;
    std::size_t total_steps = 1;
    double clip_max_norm = 1.0;  // <= 0 disables clipping

    bool clipping() const { return clip_max_norm > 0.0; }
    void validate() const;
};

// One Adam step on masked gradients. Decoupled weight decay, when enabled, only
// touches child coordinates. `params` and `state` are updated in place.
void child_tuning_adam_step(std::span<double> params, std::span<const double> grads, const GradMask& mask,
                            AdamState& state, const OptimConfig& config, double lr);

// w <- w - eta * (g .* mask)
std::vector<double> sgd_masked_step(std::span<const double> params, std::span<const double> grads,
                                    const GradMask& mask, double eta);

// Linear warmup to eta over warmup_steps, then linear decay to 0 at total_steps.
double lr_schedule(std::size_t step, const OptimConfig& config);

std::vector<double> clip_global_norm(std::span<const double> grads, double max_norm);

struct Penalty {
    double value = 0.0;
    std::vector<double> grad;
};

// lambda * ||w - w0||^2 and its gradient 2 lambda (w - w0).
Penalty weight_decay_to_pretrained_loss(std::span<const double> params, std::span<const double> w0,
                                        double lambda);

void save_adam_state(const std::string& path, const AdamState& state);
AdamState load_adam_state(const std::string& path);

}  // namespace childgrad
