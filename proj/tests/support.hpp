#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "childgrad/model.hpp"
#include "childgrad/random.hpp"

namespace testing {

using namespace childgrad;

inline double rel_err(double a, double b, double floor = 1e-4) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline ModelSpec random_spec(Rng& rng, Activation act = Activation::Tanh) {
    ModelSpec s;
    s.input_dim = 1 + rng.index(4);
    const std::size_t depth = rng.index(4);
    for (std::size_t i = 0; i < depth; ++i) s.hidden_dims.push_back(1 + rng.index(5));
    const std::size_t kind = rng.index(3);
    s.output = kind == 0 ? OutputKind::Classifier : kind == 1 ? OutputKind::Logistic : OutputKind::Regressor;
    s.num_classes = s.output == OutputKind::Classifier ? 2 + rng.index(3) : 2;
    s.activation = act;
    s.bias = rng.bernoulli(0.75);
    return s;
}

inline Dataset random_data(const ModelSpec& spec, std::size_t n, Rng& rng) {
    Dataset d;
    d.dim = spec.input_dim;
    for (std::size_t i = 0; i < n * d.dim; ++i) d.features.push_back(rng.normal());
    for (std::size_t i = 0; i < n; ++i) {
        d.targets.push_back(spec.is_classifier() ? static_cast<double>(rng.index(spec.class_count())) : rng.normal());
    }
    return d;
}

// Perturbs every parameter so biases are not all zero.
inline ParamVector random_params(const ModelSpec& spec, Rng& rng, double scale = 0.5) {
    ParamVector p = init_params(spec, rng.next_u64());
    for (auto& v : p.values()) v += scale * rng.normal();
    return p;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("childgrad_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing
