#include "childgrad/model.hpp"

#include <cmath>

#include "childgrad/error.hpp"
#include "childgrad/numeric.hpp"
#include "childgrad/random.hpp"

namespace childgrad {

const char* output_name(OutputKind kind) {
    switch (kind) {
        case OutputKind::Classifier: return "classifier";
        case OutputKind::Logistic: return "logistic";
        case OutputKind::Regressor: return "regressor";
    }
    return "unknown";
}

const char* activation_name(Activation act) {
    return act == Activation::Tanh ? "tanh" : "relu";
}

OutputKind parse_output(const std::string& name) {
    if (name == "classifier") return OutputKind::Classifier;
    if (name == "logistic") return OutputKind::Logistic;
    if (name == "regressor") return OutputKind::Regressor;
    throw ConfigError("unknown model output '" + name + "'");
}

Activation parse_activation(const std::string& name) {
    if (name == "tanh") return Activation::Tanh;
    if (name == "relu") return Activation::Relu;
    throw ConfigError("unknown activation '" + name + "'");
}

void ModelSpec::validate() const {
    if (input_dim == 0) throw ConfigError("model.input_dim must be positive");
    for (auto h : hidden_dims) {
        if (h == 0) throw ConfigError("model.hidden_dims entries must be positive");
    }
    if (output == OutputKind::Classifier && num_classes < 2) {
        throw ConfigError("classifier needs num_classes >= 2");
    }
}

std::string weight_name(const ModelSpec& spec, std::size_t layer) {
    return layer == spec.depth() ? "head.weight" : "hidden" + std::to_string(layer) + ".weight";
}

std::string bias_name(const ModelSpec& spec, std::size_t layer) {
    return layer == spec.depth() ? "head.bias" : "hidden" + std::to_string(layer) + ".bias";
}

std::vector<std::string> ModelSpec::head_param_names() const {
    std::vector<std::string> names{weight_name(*this, depth())};
    if (bias) names.push_back(bias_name(*this, depth()));
    return names;
}

ShapeRegistry make_registry(const ModelSpec& spec) {
    spec.validate();
    ShapeRegistry reg;
    std::size_t in = spec.input_dim;
    for (std::size_t layer = 0; layer <= spec.depth(); ++layer) {
        const std::size_t out = layer == spec.depth() ? spec.output_dim() : spec.hidden_dims[layer];
        reg.add(weight_name(spec, layer), {in, out}, static_cast<int>(layer));
        if (spec.bias) reg.add(bias_name(spec, layer), {out}, static_cast<int>(layer));
        in = out;
    }
    return reg;
}

Graph build_graph(const ModelSpec& spec, LossRole role) {
    spec.validate();
    Graph g;
    std::size_t slot = Graph::kFeatures;
    for (std::size_t layer = 0; layer <= spec.depth(); ++layer) {
        const std::string tag = layer == spec.depth() ? "head" : "hidden" + std::to_string(layer);
        slot = g.matmul(tag + ".matmul", slot, weight_name(spec, layer));
        if (spec.bias) slot = g.add_bias(tag + ".add_bias", slot, bias_name(spec, layer));
        if (layer < spec.depth()) {
            slot = spec.activation == Activation::Tanh ? g.tanh(tag + ".tanh", slot) : g.relu(tag + ".relu", slot);
        }
    }
    OpKind loss = OpKind::SoftmaxCrossEntropy;
    switch (spec.output) {
        case OutputKind::Classifier: loss = OpKind::SoftmaxCrossEntropy; break;
        case OutputKind::Logistic: loss = OpKind::SigmoidCrossEntropy; break;
        case OutputKind::Regressor:
            loss = role == LossRole::Training ? OpKind::MeanSquaredError : OpKind::GaussianNll;
            break;
    }
    g.loss(loss, "loss", slot);
    return g;
}

std::size_t representation_slot(const ModelSpec& spec) {
    // Each hidden layer contributes matmul (+ bias) + activation.
    const std::size_t per_layer = spec.bias ? 3 : 2;
    return spec.depth() * per_layer;
}

Batch Dataset::batch(std::span<const std::size_t> indices) const {
    if (indices.empty()) throw ShapeError("empty batch");
    std::vector<double> x;
    x.reserve(indices.size() * dim);
    std::vector<double> y;
    y.reserve(indices.size());
    for (auto i : indices) {
        if (i >= size()) throw ShapeError("batch index out of range");
        auto r = row(i);
        x.insert(x.end(), r.begin(), r.end());
        y.push_back(targets[i]);
    }
    return Batch{Tensor({indices.size(), dim}, std::move(x)), std::move(y)};
}

Batch Dataset::all() const {
    if (empty()) throw ShapeError("empty dataset");
    return Batch{Tensor({size(), dim}, features), targets};
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.dim = dim;
    for (auto i : indices) {
        auto r = row(i);
        out.features.insert(out.features.end(), r.begin(), r.end());
        out.targets.push_back(targets[i]);
        if (!domain.empty()) out.domain.push_back(domain[i]);
    }
    return out;
}

void Dataset::validate(std::size_t num_classes) const {
    if (dim == 0) throw ConfigError("dataset has zero feature columns");
    if (features.size() != targets.size() * dim) {
        throw ConfigError("dataset feature rows do not match label count");
    }
    if (!domain.empty() && domain.size() != targets.size()) {
        throw ConfigError("dataset domain tags do not match label count");
    }
    if (!all_finite(features) || !all_finite(targets)) {
        throw NumericError("dataset contains non-finite values");
    }
    if (num_classes > 0) {
        for (double y : targets) {
            if (y < 0 || y != std::floor(y) || y >= static_cast<double>(num_classes)) {
                throw ConfigError("label " + std::to_string(y) + " out of range for " +
                                  std::to_string(num_classes) + " classes");
            }
        }
    }
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
    ParamVector params(make_registry(spec));
    Rng rng(seed);
    for (const auto& e : params.registry().entries()) {
        if (e.shape.size() != 2) continue;  // biases stay zero
        const double limit = std::sqrt(6.0 / static_cast<double>(e.shape[0] + e.shape[1]));
        for (double& w : params.view(e.name)) w = rng.uniform(-limit, limit);
    }
    return params;
}

std::vector<double> log_likelihood_grad(const ModelSpec& spec, const ParamVector& params, const Dataset& data,
                                        std::size_t index) {
    if (index >= data.size()) throw ShapeError("example index out of range");
    if (spec.is_classifier()) {
        const double y = data.targets[index];
        if (y < 0 || y != std::floor(y) || y >= static_cast<double>(spec.class_count())) {
            throw ConfigError("label " + std::to_string(y) + " out of range for example " + std::to_string(index));
        }
    }
    const Graph g = build_graph(spec, LossRole::Likelihood);
    const std::size_t idx[] = {index};
    auto r = forward_backward(g, params, data.batch(idx));
    for (double& v : r.grads) v = -v;
    return r.grads;
}

Tensor predict(const ModelSpec& spec, const ParamVector& params, const Dataset& data) {
    const Graph g = build_graph(spec);
    auto values = forward_values(g, params, data.all().features, g.output_slot());
    return std::move(values.back());
}

Tensor representations(const ModelSpec& spec, const ParamVector& params, const Dataset& data) {
    const Graph g = build_graph(spec);
    auto values = forward_values(g, params, data.all().features, representation_slot(spec));
    return std::move(values.back());
}

const char* metric_name(Metric metric) {
    switch (metric) {
        case Metric::Accuracy: return "accuracy";
        case Metric::Mse: return "mse";
        case Metric::MeanLogLikelihood: return "mean_log_likelihood";
    }
    return "unknown";
}

Metric default_metric(const ModelSpec& spec) {
    return spec.is_classifier() ? Metric::Accuracy : Metric::Mse;
}

double evaluate(const ModelSpec& spec, const ParamVector& params, const Dataset& data, Metric metric) {
    if (data.empty()) throw ConfigError("cannot evaluate on an empty dataset");
    switch (metric) {
        case Metric::Accuracy: {
            if (!spec.is_classifier()) throw ConfigError("accuracy needs a classifier");
            const Tensor out = predict(spec, params, data);
            std::vector<double> hits(data.size());
            for (std::size_t i = 0; i < data.size(); ++i) {
                std::size_t label = 0;
                if (spec.output == OutputKind::Logistic) {
                    label = out(i, 0) > 0.0 ? 1 : 0;
                } else {
                    for (std::size_t j = 1; j < out.dim(1); ++j) {
                        if (out(i, j) > out(i, label)) label = j;
                    }
                }
                hits[i] = static_cast<double>(label) == data.targets[i] ? 1.0 : 0.0;
            }
            return pairwise_sum(hits) / static_cast<double>(data.size());
        }
        case Metric::Mse: {
            if (spec.is_classifier()) throw ConfigError("mse needs a regressor");
            return forward_loss(build_graph(spec, LossRole::Training), params, data.all());
        }
        case Metric::MeanLogLikelihood:
            return -forward_loss(build_graph(spec, LossRole::Likelihood), params, data.all());
    }
    throw ConfigError("unknown metric");
}

}  // namespace childgrad
