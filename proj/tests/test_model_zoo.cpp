#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "childgrad/error.hpp"
#include "childgrad/numeric.hpp"
#include "support.hpp"

using namespace childgrad;
using testing::rel_err;

namespace {

ModelSpec logistic_1d() {
    ModelSpec s;
    s.input_dim = 1;
    s.output = OutputKind::Logistic;
    s.bias = false;
    return s;
}

Dataset one_example(std::vector<double> x, double y) {
    Dataset d;
    d.dim = x.size();
    d.features = std::move(x);
    d.targets = {y};
    return d;
}

double mean_ll(const ModelSpec& spec, const ParamVector& p, const Dataset& d) {
    return evaluate(spec, p, d, Metric::MeanLogLikelihood);
}

}  // namespace

TEST_CASE("init_params is deterministic, zero-bias and Glorot bounded") {
    ModelSpec s;
    s.input_dim = 4;
    s.hidden_dims = {5, 3};
    s.num_classes = 3;
    const ParamVector a = init_params(s, 11);
    const ParamVector b = init_params(s, 11);
    CHECK(a == b);
    CHECK(!(a == init_params(s, 12)));
    for (const auto& e : a.registry().entries()) {
        auto v = a.view(e.name);
        if (e.shape.size() == 1) {
            for (double x : v) CHECK(x == 0.0);
        } else {
            const double limit = std::sqrt(6.0 / static_cast<double>(e.shape[0] + e.shape[1]));
            for (double x : v) CHECK(std::abs(x) <= limit);
        }
    }
}

TEST_CASE("initial weights have zero mean over many draws") {
    ModelSpec s;
    s.input_dim = 3;
    s.hidden_dims = {4};
    std::vector<double> draws;
    for (std::uint64_t seed = 0; draws.size() < 100000; ++seed) {
        const ParamVector p = init_params(s, seed);
        auto w = p.view("hidden0.weight");
        draws.insert(draws.end(), w.begin(), w.end());
    }
    const double n = static_cast<double>(draws.size());
    const double mean = pairwise_sum(draws) / n;
    const double limit = std::sqrt(6.0 / 7.0);
    const double se = limit / std::sqrt(3.0) / std::sqrt(n);
    CHECK(std::abs(mean) < 3.0 * se);
}

TEST_CASE("head parameters are the final linear layer") {
    ModelSpec s;
    s.input_dim = 2;
    s.hidden_dims = {3, 3};
    CHECK(s.head_param_names() == std::vector<std::string>{"head.weight", "head.bias"});
    s.bias = false;
    CHECK(s.head_param_names() == std::vector<std::string>{"head.weight"});
    const ShapeRegistry r = make_registry(s);
    CHECK(r.at("head.weight").layer == 2);
    CHECK(r.at("hidden1.weight").layer == 1);
}

TEST_CASE("model spec validation") {
    ModelSpec s;
    s.num_classes = 1;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.num_classes = 2;
    s.hidden_dims = {0};
    CHECK_THROWS_AS(s.validate(), ConfigError);
    CHECK_THROWS_AS(parse_output("ranker"), ConfigError);
}

TEST_CASE("logistic log-likelihood gradient by hand") {
    const ModelSpec s = logistic_1d();
    const ParamVector p(make_registry(s), {0.0});
    const auto g = log_likelihood_grad(s, p, one_example({1.0}, 1.0), 0);
    CHECK(g[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("zero input gives zero weight gradient without a bias") {
    ModelSpec s = logistic_1d();
    s.input_dim = 3;
    Rng rng(1);
    const ParamVector p = testing::random_params(s, rng);
    for (double y : {0.0, 1.0}) {
        const auto g = log_likelihood_grad(s, p, one_example({0.0, 0.0, 0.0}, y), 0);
        for (double v : g) CHECK(v == 0.0);
    }
}

TEST_CASE("log-likelihood gradient matches finite differences") {
    Rng rng(33);
    for (int trial = 0; trial < 15; ++trial) {
        const ModelSpec s = testing::random_spec(rng);
        ParamVector p = testing::random_params(s, rng);
        const Dataset d = testing::random_data(s, 3, rng);
        for (std::size_t j = 0; j < d.size(); ++j) {
            const auto g = log_likelihood_grad(s, p, d, j);
            const std::size_t idx[] = {j};
            const Dataset one = d.subset(idx);
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double w = p.values()[i];
                const double h = 1e-5 * (1.0 + std::abs(w));
                p.values()[i] = w + h;
                const double up = mean_ll(s, p, one);
                p.values()[i] = w - h;
                const double down = mean_ll(s, p, one);
                p.values()[i] = w;
                CHECK(rel_err(g[i], (up - down) / (2.0 * h)) < 1e-5);
            }
        }
    }
}

TEST_CASE("mean of per-example gradients is the gradient of the mean log-likelihood") {
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        const ModelSpec s = testing::random_spec(rng);
        const ParamVector p = testing::random_params(s, rng);
        const Dataset d = testing::random_data(s, 12, rng);
        const auto total = forward_backward(build_graph(s, LossRole::Likelihood), p, d.all()).grads;
        std::vector<double> acc(p.size(), 0.0);
        for (std::size_t j = 0; j < d.size(); ++j) {
            const auto g = log_likelihood_grad(s, p, d, j);
            for (std::size_t i = 0; i < p.size(); ++i) acc[i] += g[i];
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            CHECK(std::abs(acc[i] / static_cast<double>(d.size()) + total[i]) < 1e-10);
        }
    }
}

TEST_CASE("label out of range") {
    ModelSpec s;
    s.input_dim = 1;
    s.num_classes = 3;
    const ParamVector p = init_params(s, 0);
    CHECK_THROWS_AS(log_likelihood_grad(s, p, one_example({1.0}, 3.0), 0), ConfigError);
    CHECK_THROWS_AS(log_likelihood_grad(s, p, one_example({1.0}, 1.5), 0), ConfigError);
}

TEST_CASE("evaluate: perfect predictions and exact regression") {
    ModelSpec s = logistic_1d();
    const ParamVector p(make_registry(s), {3.0});
    Dataset d;
    d.dim = 1;
    d.features = {-1.0, -2.0, 1.0, 0.5};
    d.targets = {0.0, 0.0, 1.0, 1.0};
    CHECK(evaluate(s, p, d, Metric::Accuracy) == 1.0);

    ModelSpec r;
    r.input_dim = 1;
    r.output = OutputKind::Regressor;
    r.bias = false;
    const ParamVector q(make_registry(r), {2.0});
    Dataset e;
    e.dim = 1;
    e.features = {1.0, -3.0};
    e.targets = {2.0, -6.0};
    CHECK(evaluate(r, q, e, Metric::Mse) == 0.0);
    CHECK_THROWS_AS(evaluate(r, q, e, Metric::Accuracy), ConfigError);
    CHECK_THROWS_AS(evaluate(s, p, d, Metric::Mse), ConfigError);
    CHECK_THROWS_AS(evaluate(s, p, Dataset{}, Metric::Accuracy), ConfigError);
}

TEST_CASE("constant predictor on a balanced set has accuracy one half") {
    ModelSpec s;
    s.input_dim = 2;
    s.hidden_dims = {3};
    ParamVector p(make_registry(s));
    Rng rng(4);
    Dataset d;
    d.dim = 2;
    for (int i = 0; i < 50; ++i) {
        d.features.push_back(rng.normal());
        d.features.push_back(rng.normal());
        d.targets.push_back(i % 2);
    }
    CHECK(evaluate(s, p, d, Metric::Accuracy) == 0.5);
}

TEST_CASE("classifier mean log-likelihood is nonpositive") {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        ModelSpec s = testing::random_spec(rng);
        if (!s.is_classifier()) continue;
        const ParamVector p = testing::random_params(s, rng, 2.0);
        const Dataset d = testing::random_data(s, 10, rng);
        CHECK(evaluate(s, p, d, Metric::MeanLogLikelihood) <= 0.0);
    }
}

TEST_CASE("checkpoint round trip") {
    Rng rng(6);
    const ModelSpec s = testing::random_spec(rng);
    const ParamVector p = testing::random_params(s, rng);
    const auto path = (testing::temp_dir("ckpt") / "model.json").string();
    save_checkpoint(path, s, p);
    const Checkpoint c = load_checkpoint(path);
    CHECK(c.spec == s);
    CHECK(c.params == p);
    CHECK_THROWS_AS(load_checkpoint(path + ".missing"), ConfigError);
}

TEST_CASE("representations are the last hidden layer") {
    ModelSpec s;
    s.input_dim = 2;
    s.hidden_dims = {4, 3};
    Rng rng(2);
    const ParamVector p = testing::random_params(s, rng);
    const Dataset d = testing::random_data(s, 5, rng);
    const Tensor rep = representations(s, p, d);
    CHECK(rep.shape() == Shape{5, 3});
    for (double v : rep.data()) CHECK(std::abs(v) <= 1.0);
    CHECK(predict(s, p, d).shape() == Shape{5, 2});
}
