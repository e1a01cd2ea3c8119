#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "childgrad/random.hpp"
#include "childgrad/tensor.hpp"

namespace childgrad {

enum class MaskKind { BernoulliF, FisherD, RandomD, LowestD, TopkLayers, Custom };

const char* mask_kind_name(MaskKind kind);
MaskKind parse_mask_kind(const std::string& name);

// Sorted flat indices of the task head. Head entries are always kept at scale 1.
using IndexSet = std::vector<std::size_t>;

// Per-coordinate gradient multiplier: 0 freezes the coordinate, a positive value
// scales its gradient. The positive set is the child network.
class GradMask {
public:
    GradMask() = default;
    GradMask(std::vector<double> scales, MaskKind kind, double p);

    static GradMask ones(std::size_t n);

    std::span<const double> scales() const { return scales_; }
    std::size_t size() const { return scales_.size(); }
    MaskKind kind() const { return kind_; }
    double p() const { return p_; }

    bool is_child(std::size_t i) const { return scales_[i] > 0.0; }
    std::size_t positive_count() const;
    IndexSet positive_indices() const;

    bool operator==(const GradMask&) const = default;

private:
    std::vector<double> scales_;
    MaskKind kind_ = MaskKind::Custom;
    double p_ = 1.0;
};

// Fresh Bernoulli(p_F) draw: kept non-head entries carry 1/p_F, head entries 1.
GradMask bernoulli_mask(std::size_t param_count, const IndexSet& head, double p_f, Rng& rng);

// Highest-score ceil(p_D * n_non_head) non-head entries (ties to the lower index)
// plus the head, all at scale 1.
GradMask fisher_topk_mask(std::span<const double> fisher, const IndexSet& head, double p_d);

// As fisher_topk_mask but keeps the lowest scores.
GradMask lowest_fisher_mask(std::span<const double> fisher, const IndexSet& head, double p_d);

// ceil(p_D * n_non_head) non-head entries chosen uniformly without replacement, plus the head.
GradMask random_fixed_mask(std::size_t param_count, const IndexSet& head, double p_d, Rng& rng);

// Every parameter of the top k non-head layers, plus the head.
GradMask topk_layer_mask(const ShapeRegistry& registry, std::size_t k_layers, const IndexSet& head);

std::vector<double> apply_mask(std::span<const double> grads, const GradMask& mask);

// Entries outside the child network set to exactly zero.
std::vector<double> prune_params(std::span<const double> params, const GradMask& mask);

// |A n B| / |A u B| over positive-entry index sets.
double jaccard(const GradMask& a, const GradMask& b);

// Symmetric matrix of pairwise Jaccard overlaps, row-major, diagonal 1.
std::vector<std::vector<double>> overlap_matrix(std::span<const GradMask> masks);

void save_mask(const std::string& path, const GradMask& mask);
GradMask load_mask(const std::string& path);

}  // namespace childgrad
