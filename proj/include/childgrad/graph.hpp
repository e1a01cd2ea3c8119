#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "childgrad/tensor.hpp"

namespace childgrad {

enum class OpKind {
    MatMul,               // X[B,in] * W[in,out]
    AddBias,              // X[B,n] + b[n]
    Tanh,
    Relu,
    SoftmaxCrossEntropy,  // mean over batch of -log softmax(z)[y]
    SigmoidCrossEntropy,  // mean over batch of -log p(y | z), single logit
    MeanSquaredError,     // mean over batch of sum_j (z_j - y_j)^2
    GaussianNll,          // mean over batch of unit-variance Gaussian negative log-likelihood
};

const char* op_name(OpKind op);
bool is_loss(OpKind op);

struct Node {
    OpKind op;
    std::string name;
    // Value slot read by this node. Slot 0 is the batch features; node k writes slot k+1.
    std::size_t input = 0;
    std::string param;
};

// Fixed-primitive computation graph ending in exactly one scalar loss.
class Graph {
public:
    static constexpr std::size_t kFeatures = 0;

    std::size_t matmul(std::string name, std::size_t input, std::string weight);
    std::size_t add_bias(std::string name, std::size_t input, std::string bias);
    std::size_t tanh(std::string name, std::size_t input);
    std::size_t relu(std::string name, std::size_t input);
    std::size_t loss(OpKind op, std::string name, std::size_t input);

    const std::vector<Node>& nodes() const { return nodes_; }

    // Slot feeding the loss node: logits or predictions.
    std::size_t output_slot() const;
    const Node& loss_node() const;

    // Checks topological order, that every parameter resolves in the registry with a
    // compatible rank, and that there is exactly one loss node, placed last.
    void validate(const ShapeRegistry& registry) const;

private:
    std::size_t push(Node node);
    std::vector<Node> nodes_;
};

// One slice of a dataset. features is [B, d]; targets holds B class indices
// (classification losses) or B*out real targets (regression losses).
struct Batch {
    Tensor features;
    std::vector<double> targets;

    std::size_t size() const { return features.rank() == 0 ? 0 : features.dim(0); }
};

struct LossAndGrad {
    double loss = 0.0;
    std::vector<double> grads;  // aligned with the ParamVector
};

// Mean loss over the batch and its exact gradient via reverse-mode
// differentiation. Pure and deterministic: reductions over the batch use pairwise
// summation in ascending example order.
LossAndGrad forward_backward(const Graph& graph, const ParamVector& params, const Batch& batch);

double forward_loss(const Graph& graph, const ParamVector& params, const Batch& batch);

// Values of all slots up to and including `last_slot` for the given features.
std::vector<Tensor> forward_values(const Graph& graph, const ParamVector& params, const Tensor& features,
                                   std::size_t last_slot);

enum class StepRule {
    Absolute,  // step h for every coordinate
    Relative,  // step h * (1 + |w_i|)
};

// Central finite-difference gradient of forward_loss. Test oracle.
std::vector<double> finite_diff_grad(const Graph& graph, const ParamVector& params, const Batch& batch, double h,
                                     StepRule rule = StepRule::Absolute);

}  // namespace childgrad
