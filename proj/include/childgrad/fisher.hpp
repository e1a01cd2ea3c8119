#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "childgrad/model.hpp"

namespace childgrad {

// Diagonal of the empirical Fisher information at a parameter point.
struct FisherDiag {
    std::vector<double> scores;
    std::string params_hash;  // hex FNV-1a of the parameter values it was computed at
    std::size_t dataset_size = 0;
};

std::string params_hash(const ParamVector& params);

// F_i = (1/|D|) sum_j (d log p(y_j | x_j; w) / d w_i)^2 with the gold labels y_j.
//
// Examples are visited in a canonical order (sorted by label, then features) and
// reduced by pairwise summation, so the result does not depend on how the
// dataset is shuffled. `max_samples` caps |D| to the first N examples of the
// dataset as given.
FisherDiag empirical_fisher_diag(const ModelSpec& spec, const ParamVector& params, const Dataset& data,
                                 std::optional<std::size_t> max_samples = std::nullopt);

void save_fisher(const std::string& path, const FisherDiag& fisher);
FisherDiag load_fisher(const std::string& path);

}  // namespace childgrad
