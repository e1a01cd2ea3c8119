#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "childgrad/graph.hpp"
#include "childgrad/tensor.hpp"

namespace childgrad {

enum class OutputKind {
    Classifier,  // softmax over num_classes logits
    Logistic,    // binary classifier with a single logit, p(y=1) = sigmoid(z)
    Regressor,   // one real output, unit-variance Gaussian likelihood
};

enum class Activation { Tanh, Relu };

const char* output_name(OutputKind kind);
const char* activation_name(Activation act);
OutputKind parse_output(const std::string& name);
Activation parse_activation(const std::string& name);

struct ModelSpec {
    std::size_t input_dim = 1;
    std::vector<std::size_t> hidden_dims;
    OutputKind output = OutputKind::Classifier;
    std::size_t num_classes = 2;
    Activation activation = Activation::Tanh;
    bool bias = true;

    bool is_classifier() const { return output != OutputKind::Regressor; }
    std::size_t class_count() const { return is_classifier() ? num_classes : 0; }
    std::size_t output_dim() const { return output == OutputKind::Classifier ? num_classes : 1; }
    std::size_t depth() const { return hidden_dims.size(); }

    // Weight and bias of the final linear layer.
    std::vector<std::string> head_param_names() const;

    void validate() const;

    bool operator==(const ModelSpec&) const = default;
};

std::string weight_name(const ModelSpec& spec, std::size_t layer);
std::string bias_name(const ModelSpec& spec, std::size_t layer);

ShapeRegistry make_registry(const ModelSpec& spec);

enum class LossRole {
    Training,    // cross-entropy or mean squared error
    Likelihood,  // negative log-likelihood (cross-entropy or Gaussian NLL)
};

Graph build_graph(const ModelSpec& spec, LossRole role = LossRole::Training);

// Slot holding the last hidden representation (the features slot when there are
// no hidden layers).
std::size_t representation_slot(const ModelSpec& spec);

struct Dataset {
    std::size_t dim = 0;
    std::vector<double> features;  // row-major, size() x dim
    std::vector<double> targets;   // class index or real target per row
    std::vector<int> domain;       // optional domain tag per row

    std::size_t size() const { return targets.size(); }
    bool empty() const { return targets.empty(); }
    std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }

    Batch batch(std::span<const std::size_t> indices) const;
    Batch all() const;
    Dataset subset(std::span<const std::size_t> indices) const;

    // Row counts match; class labels are integral and below num_classes when
    // num_classes > 0.
    void validate(std::size_t num_classes) const;
};

// Glorot-uniform weights, zero biases, deterministic in seed.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

// Gradient of log p(y | x; w) for one example.
std::vector<double> log_likelihood_grad(const ModelSpec& spec, const ParamVector& params, const Dataset& data,
                                        std::size_t index);

// Model outputs (logits or predictions), [n, output_dim].
Tensor predict(const ModelSpec& spec, const ParamVector& params, const Dataset& data);

// Last hidden representation, [n, width].
Tensor representations(const ModelSpec& spec, const ParamVector& params, const Dataset& data);

enum class Metric { Accuracy, Mse, MeanLogLikelihood };

const char* metric_name(Metric metric);
Metric default_metric(const ModelSpec& spec);

double evaluate(const ModelSpec& spec, const ParamVector& params, const Dataset& data, Metric metric);

void save_checkpoint(const std::string& path, const ModelSpec& spec, const ParamVector& params);
struct Checkpoint {
    ModelSpec spec;
    ParamVector params;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace childgrad
