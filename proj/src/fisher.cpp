#include "childgrad/fisher.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "childgrad/error.hpp"
#include "childgrad/numeric.hpp"

namespace childgrad {

std::string params_hash(const ParamVector& params) {
    return hex64(hash_doubles(params.values()));
}

namespace {

std::vector<std::size_t> canonical_order(const Dataset& data, std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (data.targets[a] != data.targets[b]) return data.targets[a] < data.targets[b];
        auto ra = data.row(a);
        auto rb = data.row(b);
        return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    });
    return order;
}

}  // namespace

FisherDiag empirical_fisher_diag(const ModelSpec& spec, const ParamVector& params, const Dataset& data,
                                 std::optional<std::size_t> max_samples) {
    if (data.empty()) throw ConfigError("Fisher information needs a nonempty dataset");
    data.validate(spec.class_count());
    std::size_t n = data.size();
    if (max_samples) {
        if (*max_samples == 0) throw ConfigError("fisher sample cap must be positive");
        n = std::min(n, *max_samples);
    }

    const Graph graph = build_graph(spec, LossRole::Likelihood);
    const std::size_t dim = params.size();
    // squared[i * n + j]: squared log-likelihood gradient of coordinate i on the
    // j-th example in canonical order.
    std::vector<double> squared(dim * n);
    const auto order = canonical_order(data, n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t idx[] = {order[j]};
        LossAndGrad r;
        try {
            r = forward_backward(graph, params, data.batch(idx));
        } catch (const NumericError& e) {
            throw NumericError("Fisher: example " + std::to_string(order[j]) + ": " + e.what());
        }
        for (std::size_t i = 0; i < dim; ++i) squared[i * n + j] = r.grads[i] * r.grads[i];
    }

    FisherDiag out;
    out.scores.resize(dim);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < dim; ++i) {
        out.scores[i] = pairwise_sum(std::span<const double>(squared.data() + i * n, n)) * inv_n;
    }
    if (!all_finite(out.scores)) throw NumericError("Fisher: non-finite score");
    out.params_hash = params_hash(params);
    out.dataset_size = n;
    return out;
}

}  // namespace childgrad
