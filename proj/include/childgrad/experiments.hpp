#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "childgrad/training.hpp"

namespace childgrad {

// Desk-scale ablation task: 1000-example two-moons with eight nuisance features,
// 20% flipped training labels and a rotation relative to the clean source task
// the [32, 32] tanh MLP is pretrained on.
RunConfig ablation_config(Method method, double p);

// ablation_config with the training split subsampled to 100 examples.
RunConfig low_resource_config(Method method, double p);

// child_f(p_f) on overlapping two-Gaussians, with decoupled weight decay and a
// final sharpness estimate.
RunConfig flatness_config(double p_f);

std::vector<std::uint64_t> analog_seeds();   // 1..10
std::vector<std::uint64_t> overlap_seeds();  // 1..5

struct PairedComparison {
    std::string better;
    std::string worse;
    double mean_diff = 0.0;  // mean over seeds of better - worse
    bool strict = true;      // require mean_diff > 0 rather than >= 0

    bool holds() const { return strict ? mean_diff > 0.0 : mean_diff >= 0.0; }
};

PairedComparison paired_comparison(const std::string& better, std::span<const double> a, const std::string& worse,
                                   std::span<const double> b, bool strict);

struct ExperimentResult {
    bool pass = false;
    std::string summary;
    std::vector<std::pair<std::string, double>> means;
    std::vector<PairedComparison> comparisons;
};

// child_d > random_d > vanilla, child_d > lowest_d, child_d > prune_d on eval accuracy.
ExperimentResult run_ablation(std::span<const std::uint64_t> seeds);

// child_d >= vanilla and child_f >= vanilla on eval accuracy.
ExperimentResult run_low_resource(std::span<const std::uint64_t> seeds);

// Seed-averaged sharpness non-increasing over p_F = 1, 0.4, 0.2.
ExperimentResult run_flatness(std::span<const std::uint64_t> seeds);

// Fisher-mask Jaccard between two draws of the same classification task versus
// a classification and a regression task on the same backbone.
ExperimentResult run_overlap(std::span<const std::uint64_t> seeds);

}  // namespace childgrad
