#include "childgrad/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "childgrad/error.hpp"
#include "childgrad/numeric.hpp"

namespace childgrad {

const char* op_name(OpKind op) {
    switch (op) {
        case OpKind::MatMul: return "matmul";
        case OpKind::AddBias: return "add_bias";
        case OpKind::Tanh: return "tanh";
        case OpKind::Relu: return "relu";
        case OpKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
        case OpKind::SigmoidCrossEntropy: return "sigmoid_cross_entropy";
        case OpKind::MeanSquaredError: return "mean_squared_error";
        case OpKind::GaussianNll: return "gaussian_nll";
    }
    return "unknown";
}

bool is_loss(OpKind op) {
    return op == OpKind::SoftmaxCrossEntropy || op == OpKind::SigmoidCrossEntropy ||
           op == OpKind::MeanSquaredError || op == OpKind::GaussianNll;
}

std::size_t Graph::push(Node node) {
    nodes_.push_back(std::move(node));
    return nodes_.size();
}

std::size_t Graph::matmul(std::string name, std::size_t input, std::string weight) {
    return push({OpKind::MatMul, std::move(name), input, std::move(weight)});
}

std::size_t Graph::add_bias(std::string name, std::size_t input, std::string bias) {
    return push({OpKind::AddBias, std::move(name), input, std::move(bias)});
}

std::size_t Graph::tanh(std::string name, std::size_t input) {
    return push({OpKind::Tanh, std::move(name), input, {}});
}

std::size_t Graph::relu(std::string name, std::size_t input) {
    return push({OpKind::Relu, std::move(name), input, {}});
}

std::size_t Graph::loss(OpKind op, std::string name, std::size_t input) {
    if (!is_loss(op)) {
        throw ShapeError("node '" + name + "': " + op_name(op) + " is not a loss primitive");
    }
    return push({op, std::move(name), input, {}});
}

const Node& Graph::loss_node() const {
    if (nodes_.empty() || !is_loss(nodes_.back().op)) {
        throw ShapeError("graph has no terminal loss node");
    }
    return nodes_.back();
}

std::size_t Graph::output_slot() const {
    return loss_node().input;
}

void Graph::validate(const ShapeRegistry& registry) const {
    std::size_t losses = 0;
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
        const Node& n = nodes_[k];
        if (n.input > k) {
            throw ShapeError("node '" + n.name + "' reads slot " + std::to_string(n.input) +
                             " which is not computed before it");
        }
        if (n.input > 0 && is_loss(nodes_[n.input - 1].op)) {
            throw ShapeError("node '" + n.name + "' consumes the scalar loss");
        }
        if (is_loss(n.op)) {
            ++losses;
            if (k + 1 != nodes_.size()) {
                throw ShapeError("loss node '" + n.name + "' must be the last node");
            }
        }
        if (n.op == OpKind::MatMul || n.op == OpKind::AddBias) {
            const ParamEntry* e = registry.find(n.param);
            if (!e) {
                throw ShapeError("node '" + n.name + "': parameter '" + n.param + "' is not registered");
            }
            const std::size_t want_rank = n.op == OpKind::MatMul ? 2 : 1;
            if (e->shape.size() != want_rank) {
                throw ShapeError("node '" + n.name + "': parameter '" + n.param + "' has shape " +
                                 shape_string(e->shape));
            }
        }
    }
    if (losses != 1) {
        throw ShapeError("graph must have exactly one loss node, found " + std::to_string(losses));
    }
}

namespace {

struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
    double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

Mat transpose(const Mat& m) {
    Mat t(m.cols, m.rows);
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < m.cols; ++c) t.at(c, r) = m.at(r, c);
    return t;
}

Mat from_tensor(const Tensor& t) {
    if (t.rank() != 2) {
        throw ShapeError("batch features must be a rank-2 tensor, got " + shape_string(t.shape()));
    }
    Mat m(t.dim(0), t.dim(1));
    std::copy(t.data().begin(), t.data().end(), m.v.begin());
    return m;
}

[[noreturn]] void shape_fail(const Node& n, const std::string& what) {
    throw ShapeError("node '" + n.name + "' (" + op_name(n.op) + "): " + what);
}

Mat apply_forward(const Node& n, const Mat& x, const ParamVector& params) {
    switch (n.op) {
        case OpKind::MatMul: {
            const ParamEntry& e = params.registry().at(n.param);
            if (e.shape.size() != 2 || e.shape[0] != x.cols) {
                shape_fail(n, "input has " + std::to_string(x.cols) + " columns but weight '" + n.param +
                                  "' has shape " + shape_string(e.shape));
            }
            auto w = params.view(n.param);
            const std::size_t out = e.shape[1];
            Mat y(x.rows, out);
            for (std::size_t b = 0; b < x.rows; ++b) {
                for (std::size_t i = 0; i < x.cols; ++i) {
                    const double xi = x.at(b, i);
                    const double* wrow = w.data() + i * out;
                    double* yrow = y.v.data() + b * out;
                    for (std::size_t j = 0; j < out; ++j) yrow[j] += xi * wrow[j];
                }
            }
            return y;
        }
        case OpKind::AddBias: {
            const ParamEntry& e = params.registry().at(n.param);
            if (e.shape.size() != 1 || e.shape[0] != x.cols) {
                shape_fail(n, "input has " + std::to_string(x.cols) + " columns but bias '" + n.param +
                                  "' has shape " + shape_string(e.shape));
            }
            auto bias = params.view(n.param);
            Mat y = x;
            for (std::size_t b = 0; b < x.rows; ++b)
                for (std::size_t j = 0; j < x.cols; ++j) y.at(b, j) += bias[j];
            return y;
        }
        case OpKind::Tanh: {
            Mat y = x;
            for (auto& v : y.v) v = std::tanh(v);
            return y;
        }
        case OpKind::Relu: {
            Mat y = x;
            for (auto& v : y.v) v = v > 0.0 ? v : 0.0;
            return y;
        }
        default:
            shape_fail(n, "loss primitive evaluated as a layer");
    }
}

double softplus(double z) {
    return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

double sigmoid(double z) {
    if (z >= 0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

std::size_t class_index(const Node& n, double target, std::size_t classes) {
    if (!(target >= 0.0) || target != std::floor(target) || target >= static_cast<double>(classes)) {
        shape_fail(n, "label " + std::to_string(target) + " out of range for " + std::to_string(classes) +
                          " classes");
    }
    return static_cast<std::size_t>(target);
}

// Per-example losses and d(mean loss)/d(output).
struct LossEval {
    std::vector<double> per_example;
    Mat seed;
};

LossEval eval_loss(const Node& n, const Mat& z, std::span<const double> targets, bool want_seed) {
    const std::size_t batch = z.rows;
    LossEval out;
    out.per_example.resize(batch);
    if (want_seed) out.seed = Mat(z.rows, z.cols);
    const double inv_b = 1.0 / static_cast<double>(batch);

    switch (n.op) {
        case OpKind::SoftmaxCrossEntropy: {
            if (targets.size() != batch) shape_fail(n, "expected one label per example");
            if (z.cols < 2) shape_fail(n, "softmax needs at least two logits");
            for (std::size_t b = 0; b < batch; ++b) {
                const std::size_t y = class_index(n, targets[b], z.cols);
                double zmax = z.at(b, 0);
                for (std::size_t j = 1; j < z.cols; ++j) zmax = std::max(zmax, z.at(b, j));
                double s = 0.0;
                for (std::size_t j = 0; j < z.cols; ++j) s += std::exp(z.at(b, j) - zmax);
                const double lse = zmax + std::log(s);
                out.per_example[b] = lse - z.at(b, y);
                if (want_seed) {
                    for (std::size_t j = 0; j < z.cols; ++j) {
                        const double p = std::exp(z.at(b, j) - lse);
                        out.seed.at(b, j) = (p - (j == y ? 1.0 : 0.0)) * inv_b;
                    }
                }
            }
            break;
        }
        case OpKind::SigmoidCrossEntropy: {
            if (targets.size() != batch) shape_fail(n, "expected one label per example");
            if (z.cols != 1) shape_fail(n, "sigmoid cross-entropy needs exactly one logit");
            for (std::size_t b = 0; b < batch; ++b) {
                const double y = static_cast<double>(class_index(n, targets[b], 2));
                const double zb = z.at(b, 0);
                out.per_example[b] = softplus(zb) - y * zb;
                if (want_seed) out.seed.at(b, 0) = (sigmoid(zb) - y) * inv_b;
            }
            break;
        }
        case OpKind::MeanSquaredError:
        case OpKind::GaussianNll: {
            if (targets.size() != batch * z.cols) shape_fail(n, "expected " + std::to_string(z.cols) + " targets per example");
            const bool nll = n.op == OpKind::GaussianNll;
            const double constant = nll ? 0.5 * static_cast<double>(z.cols) * std::log(2.0 * std::numbers::pi) : 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                double acc = 0.0;
                for (std::size_t j = 0; j < z.cols; ++j) {
                    const double r = z.at(b, j) - targets[b * z.cols + j];
                    acc += r * r;
                    if (want_seed) out.seed.at(b, j) = (nll ? r : 2.0 * r) * inv_b;
                }
                out.per_example[b] = nll ? 0.5 * acc + constant : acc;
            }
            break;
        }
        default:
            shape_fail(n, "not a loss primitive");
    }
    return out;
}

struct ForwardState {
    std::vector<Mat> slots;
    LossEval loss;
    double mean_loss = 0.0;
};

ForwardState run_forward(const Graph& graph, const ParamVector& params, const Batch& batch, bool want_seed) {
    graph.validate(params.registry());
    if (batch.size() == 0) {
        throw ShapeError("empty batch");
    }
    ForwardState st;
    st.slots.reserve(graph.nodes().size() + 1);
    st.slots.push_back(from_tensor(batch.features));
    for (const Node& n : graph.nodes()) {
        if (is_loss(n.op)) {
            st.loss = eval_loss(n, st.slots[n.input], batch.targets, want_seed);
            st.slots.emplace_back();
        } else {
            st.slots.push_back(apply_forward(n, st.slots[n.input], params));
        }
    }
    st.mean_loss = pairwise_sum(st.loss.per_example) / static_cast<double>(batch.size());
    if (!std::isfinite(st.mean_loss)) {
        throw NumericError("non-finite loss at node '" + graph.loss_node().name + "'");
    }
    return st;
}

}  // namespace

double forward_loss(const Graph& graph, const ParamVector& params, const Batch& batch) {
    return run_forward(graph, params, batch, false).mean_loss;
}

LossAndGrad forward_backward(const Graph& graph, const ParamVector& params, const Batch& batch) {
    ForwardState st = run_forward(graph, params, batch, true);
    const auto& nodes = graph.nodes();

    std::vector<Mat> grad(st.slots.size());
    std::vector<bool> has_grad(st.slots.size(), false);
    grad[graph.output_slot()] = std::move(st.loss.seed);
    has_grad[graph.output_slot()] = true;

    LossAndGrad out;
    out.loss = st.mean_loss;
    out.grads.assign(params.size(), 0.0);
    std::vector<double> terms;

    auto accumulate = [&](std::size_t slot, Mat&& g) {
        if (!has_grad[slot]) {
            grad[slot] = std::move(g);
            has_grad[slot] = true;
        } else {
            for (std::size_t i = 0; i < g.v.size(); ++i) grad[slot].v[i] += g.v[i];
        }
    };

    for (std::size_t k = nodes.size(); k-- > 0;) {
        const Node& n = nodes[k];
        const std::size_t out_slot = k + 1;
        if (is_loss(n.op) || !has_grad[out_slot]) continue;
        const Mat& dy = grad[out_slot];
        const Mat& x = st.slots[n.input];
        const bool need_dx = n.input != Graph::kFeatures;

        switch (n.op) {
            case OpKind::MatMul: {
                const ParamEntry& e = params.registry().at(n.param);
                const std::size_t in = e.shape[0];
                const std::size_t outd = e.shape[1];
                const Mat xt = transpose(x);
                const Mat dyt = transpose(dy);
                terms.resize(x.rows);
                for (std::size_t i = 0; i < in; ++i) {
                    for (std::size_t j = 0; j < outd; ++j) {
                        for (std::size_t b = 0; b < x.rows; ++b) terms[b] = xt.at(i, b) * dyt.at(j, b);
                        out.grads[e.offset + i * outd + j] += pairwise_sum(terms);
                    }
                }
                if (need_dx) {
                    auto w = params.view(n.param);
                    Mat dx(x.rows, in);
                    for (std::size_t b = 0; b < x.rows; ++b)
                        for (std::size_t i = 0; i < in; ++i) {
                            double acc = 0.0;
                            for (std::size_t j = 0; j < outd; ++j) acc += dy.at(b, j) * w[i * outd + j];
                            dx.at(b, i) = acc;
                        }
                    accumulate(n.input, std::move(dx));
                }
                break;
            }
            case OpKind::AddBias: {
                const ParamEntry& e = params.registry().at(n.param);
                const Mat dyt = transpose(dy);
                for (std::size_t j = 0; j < dy.cols; ++j) {
                    std::span<const double> col(dyt.v.data() + j * dy.rows, dy.rows);
                    out.grads[e.offset + j] += pairwise_sum(col);
                }
                if (need_dx) accumulate(n.input, Mat(dy));
                break;
            }
            case OpKind::Tanh: {
                if (!need_dx) break;
                const Mat& y = st.slots[out_slot];
                Mat dx(dy.rows, dy.cols);
                for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] = dy.v[i] * (1.0 - y.v[i] * y.v[i]);
                accumulate(n.input, std::move(dx));
                break;
            }
            case OpKind::Relu: {
                if (!need_dx) break;
                Mat dx(dy.rows, dy.cols);
                for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] = x.v[i] > 0.0 ? dy.v[i] : 0.0;
                accumulate(n.input, std::move(dx));
                break;
            }
            default:
                break;
        }
    }
    if (!all_finite(out.grads)) {
        throw NumericError("non-finite gradient");
    }
    return out;
}

std::vector<Tensor> forward_values(const Graph& graph, const ParamVector& params, const Tensor& features,
                                   std::size_t last_slot) {
    graph.validate(params.registry());
    if (last_slot > graph.output_slot()) {
        throw ShapeError("slot " + std::to_string(last_slot) + " is past the model output");
    }
    std::vector<Mat> slots;
    slots.push_back(from_tensor(features));
    for (std::size_t k = 0; k < last_slot; ++k) {
        const Node& n = graph.nodes()[k];
        slots.push_back(apply_forward(n, slots[n.input], params));
    }
    std::vector<Tensor> out;
    out.reserve(slots.size());
    for (auto& m : slots) {
        out.emplace_back(Shape{m.rows, m.cols}, std::move(m.v));
    }
    return out;
}

std::vector<double> finite_diff_grad(const Graph& graph, const ParamVector& params, const Batch& batch, double h,
                                     StepRule rule) {
    if (!(h > 0.0)) {
        throw ConfigError("finite-difference step must be positive");
    }
    ParamVector probe = params;
    std::vector<double> out(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double w = params.values()[i];
        const double step = rule == StepRule::Relative ? h * (1.0 + std::abs(w)) : h;
        probe.values()[i] = w + step;
        const double up = forward_loss(graph, probe, batch);
        probe.values()[i] = w - step;
        const double down = forward_loss(graph, probe, batch);
        probe.values()[i] = w;
        // (w + step) - (w - step) is the step actually taken after rounding.
        out[i] = (up - down) / ((w + step) - (w - step));
    }
    return out;
}

}  // namespace childgrad
