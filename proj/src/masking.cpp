#include "childgrad/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "childgrad/error.hpp"
#include "childgrad/numeric.hpp"

namespace childgrad {

const char* mask_kind_name(MaskKind kind) {
    switch (kind) {
        case MaskKind::BernoulliF: return "bernoulli_f";
        case MaskKind::FisherD: return "fisher_d";
        case MaskKind::RandomD: return "random_d";
        case MaskKind::LowestD: return "lowest_d";
        case MaskKind::TopkLayers: return "topk_layers";
        case MaskKind::Custom: return "custom";
    }
    return "custom";
}

MaskKind parse_mask_kind(const std::string& name) {
    for (auto k : {MaskKind::BernoulliF, MaskKind::FisherD, MaskKind::RandomD, MaskKind::LowestD,
                   MaskKind::TopkLayers, MaskKind::Custom}) {
        if (name == mask_kind_name(k)) return k;
    }
    throw ConfigError("unknown mask kind '" + name + "'");
}

GradMask::GradMask(std::vector<double> scales, MaskKind kind, double p)
    : scales_(std::move(scales)), kind_(kind), p_(p) {
    for (double s : scales_) {
        if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError("mask scales must be finite and nonnegative");
    }
}

GradMask GradMask::ones(std::size_t n) {
    return GradMask(std::vector<double>(n, 1.0), MaskKind::Custom, 1.0);
}

std::size_t GradMask::positive_count() const {
    return static_cast<std::size_t>(std::count_if(scales_.begin(), scales_.end(), [](double s) { return s > 0.0; }));
}

IndexSet GradMask::positive_indices() const {
    IndexSet out;
    for (std::size_t i = 0; i < scales_.size(); ++i) {
        if (scales_[i] > 0.0) out.push_back(i);
    }
    return out;
}

namespace {

void check_ratio(double p, const char* what) {
    if (!(p > 0.0 && p <= 1.0)) {
        throw ConfigError(std::string(what) + " must lie in (0, 1], got " + std::to_string(p));
    }
}

std::vector<bool> head_flags(std::size_t n, const IndexSet& head) {
    std::vector<bool> flags(n, false);
    for (auto i : head) {
        if (i >= n) throw ShapeError("head index " + std::to_string(i) + " outside " + std::to_string(n) + " parameters");
        flags[i] = true;
    }
    return flags;
}

GradMask ranked_mask(std::span<const double> fisher, const IndexSet& head, double p_d, bool highest) {
    check_ratio(p_d, "p_D");
    for (double f : fisher) {
        if (!(f >= 0.0) || !std::isfinite(f)) throw NumericError("Fisher scores must be finite and nonnegative");
    }
    const std::size_t n = fisher.size();
    const auto is_head = head_flags(n, head);
    std::vector<std::size_t> candidates;
    candidates.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!is_head[i]) candidates.push_back(i);
    }
    const std::size_t keep = ratio_count(p_d, candidates.size());
    auto before = [&](std::size_t a, std::size_t b) {
        if (fisher[a] != fisher[b]) return highest ? fisher[a] > fisher[b] : fisher[a] < fisher[b];
        return a < b;
    };
    std::nth_element(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                     before);

    std::vector<double> scales(n, 0.0);
    for (std::size_t i = 0; i < keep; ++i) scales[candidates[i]] = 1.0;
    for (auto i : head) scales[i] = 1.0;
    return GradMask(std::move(scales), highest ? MaskKind::FisherD : MaskKind::LowestD, p_d);
}

}  // namespace

GradMask bernoulli_mask(std::size_t param_count, const IndexSet& head, double p_f, Rng& rng) {
    check_ratio(p_f, "p_F");
    const auto is_head = head_flags(param_count, head);
    const double scale = 1.0 / p_f;
    std::vector<double> scales(param_count, 0.0);
    for (std::size_t i = 0; i < param_count; ++i) {
        if (is_head[i]) {
            scales[i] = 1.0;
        } else if (rng.bernoulli(p_f)) {
            scales[i] = scale;
        }
    }
    return GradMask(std::move(scales), MaskKind::BernoulliF, p_f);
}

GradMask fisher_topk_mask(std::span<const double> fisher, const IndexSet& head, double p_d) {
    return ranked_mask(fisher, head, p_d, true);
}

GradMask lowest_fisher_mask(std::span<const double> fisher, const IndexSet& head, double p_d) {
    return ranked_mask(fisher, head, p_d, false);
}

GradMask random_fixed_mask(std::size_t param_count, const IndexSet& head, double p_d, Rng& rng) {
    check_ratio(p_d, "p_D");
    const auto is_head = head_flags(param_count, head);
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < param_count; ++i) {
        if (!is_head[i]) candidates.push_back(i);
    }
    const std::size_t keep = ratio_count(p_d, candidates.size());
    // Partial Fisher-Yates: the first `keep` slots become a uniform sample.
    for (std::size_t i = 0; i < keep; ++i) {
        const std::size_t j = i + rng.index(candidates.size() - i);
        std::swap(candidates[i], candidates[j]);
    }
    std::vector<double> scales(param_count, 0.0);
    for (std::size_t i = 0; i < keep; ++i) scales[candidates[i]] = 1.0;
    for (auto i : head) scales[i] = 1.0;
    return GradMask(std::move(scales), MaskKind::RandomD, p_d);
}

GradMask topk_layer_mask(const ShapeRegistry& registry, std::size_t k_layers, const IndexSet& head) {
    const std::size_t n = registry.total_size();
    const auto is_head = head_flags(n, head);
    // Layers holding at least one non-head parameter, ordered from the input.
    std::vector<int> layers;
    for (const auto& e : registry.entries()) {
        bool non_head = false;
        for (std::size_t i = 0; i < e.size && !non_head; ++i) non_head = !is_head[e.offset + i];
        if (non_head) layers.push_back(e.layer);
    }
    std::sort(layers.begin(), layers.end());
    layers.erase(std::unique(layers.begin(), layers.end()), layers.end());
    if (k_layers > layers.size()) {
        throw ConfigError("top-k layers: k = " + std::to_string(k_layers) + " exceeds depth " +
                          std::to_string(layers.size()));
    }
    std::vector<int> chosen(layers.end() - static_cast<std::ptrdiff_t>(k_layers), layers.end());
    std::vector<double> scales(n, 0.0);
    for (const auto& e : registry.entries()) {
        if (std::find(chosen.begin(), chosen.end(), e.layer) == chosen.end()) continue;
        std::fill_n(scales.begin() + static_cast<std::ptrdiff_t>(e.offset), e.size, 1.0);
    }
    for (auto i : head) scales[i] = 1.0;
    const double p = layers.empty() ? 1.0 : static_cast<double>(k_layers) / static_cast<double>(layers.size());
    return GradMask(std::move(scales), MaskKind::TopkLayers, p);
}

std::vector<double> apply_mask(std::span<const double> grads, const GradMask& mask) {
    if (grads.size() != mask.size()) {
        throw ShapeError("apply_mask: " + std::to_string(grads.size()) + " gradients vs mask of " +
                         std::to_string(mask.size()));
    }
    std::vector<double> out(grads.size());
    auto s = mask.scales();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = grads[i] * s[i];
    return out;
}

std::vector<double> prune_params(std::span<const double> params, const GradMask& mask) {
    if (params.size() != mask.size()) {
        throw ShapeError("prune_params: " + std::to_string(params.size()) + " parameters vs mask of " +
                         std::to_string(mask.size()));
    }
    std::vector<double> out(params.begin(), params.end());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!mask.is_child(i)) out[i] = 0.0;
    }
    return out;
}

double jaccard(const GradMask& a, const GradMask& b) {
    if (a.size() != b.size()) {
        throw ShapeError("jaccard: masks of " + std::to_string(a.size()) + " and " + std::to_string(b.size()) +
                         " entries");
    }
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool x = a.is_child(i);
        const bool y = b.is_child(i);
        inter += (x && y) ? 1 : 0;
        uni += (x || y) ? 1 : 0;
    }
    if (uni == 0) throw ConfigError("jaccard: overlap of two empty masks is undefined");
    return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::vector<double>> overlap_matrix(std::span<const GradMask> masks) {
    if (masks.size() < 2) throw ConfigError("overlap matrix needs at least two masks");
    for (const auto& m : masks) {
        if (m.size() != masks[0].size()) throw ShapeError("overlap matrix: masks are not aligned");
    }
    const std::size_t n = masks.size();
    std::vector<std::vector<double>> out(n, std::vector<double>(n, 1.0));
    for (std::size_t i = 0; i < n; ++i) {
        out[i][i] = jaccard(masks[i], masks[i]);
        for (std::size_t j = i + 1; j < n; ++j) {
            out[i][j] = out[j][i] = jaccard(masks[i], masks[j]);
        }
    }
    return out;
}

}  // namespace childgrad
