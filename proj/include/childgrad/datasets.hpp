#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "childgrad/model.hpp"

namespace childgrad {

// Synthetic or CSV-backed task description.
//
// Generators:
//   two_gaussians      dim, separation, n      class means at +-separation/2 along (1,..,1)/sqrt(dim), unit covariance
//   two_moons          noise, n, dim           interleaved half circles in the first two features with
//                                              Gaussian noise; features past the second are pure noise
//   linear_regression  dim, noise, n           y = w* . x + noise * N(0,1), w* drawn from the seed
//   csv                path                    header row, last column is the label
//
// `translate` (along (1,..,1)/sqrt(dim)) and `rotate` (radians, first two
// features) move the whole task. Each entry of `eval_shifts` adds an
// out-of-domain eval set translated by that many standard deviations on top.
// `label_flip` replaces each train-split class label with a different class
// with that probability; eval sets keep clean labels.
struct DataSpec {
    std::string generator = "two_gaussians";
    std::size_t n = 1000;
    std::size_t dim = 2;
    double separation = 2.0;
    double noise = 0.1;
    std::string path;
    double train_fraction = 0.8;
    double translate = 0.0;
    double rotate = 0.0;
    std::vector<double> eval_shifts;
    double label_flip = 0.0;
    // Fixed data seed; when unset the run seed is used.
    std::optional<std::uint64_t> seed;

    bool is_regression() const { return generator == "linear_regression"; }
    bool operator==(const DataSpec&) const = default;
};

struct DataSplits {
    Dataset train;
    Dataset eval;
    std::vector<std::pair<std::string, Dataset>> shifted;  // ("shift1.0", data)
};

DataSplits make_dataset(const DataSpec& spec, std::uint64_t seed);

// Header row, numeric features, label in the final column.
Dataset load_csv(const std::string& path);

// n examples by per-class stratified sampling (uniform for regression, when
// num_classes == 0). Deterministic in seed; keeps the original relative order.
Dataset subsample(const Dataset& data, std::size_t n, std::uint64_t seed, std::size_t num_classes);

}  // namespace childgrad
