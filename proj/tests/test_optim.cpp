#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "childgrad/error.hpp"
#include "childgrad/numeric.hpp"
#include "childgrad/optim.hpp"
#include "support.hpp"

using namespace childgrad;

namespace {

struct PlainAdam {
    std::vector<double> m, v;
    int t = 0;

    void step(std::vector<double>& w, const std::vector<double>& g, double lr, double b1, double b2, double eps) {
        if (m.empty()) {
            m.assign(w.size(), 0.0);
            v.assign(w.size(), 0.0);
        }
        ++t;
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = b1 * m[i] + (1 - b1) * g[i];
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
            const double mh = m[i] / (1 - std::pow(b1, t));
            const double vh = v[i] / (1 - std::pow(b2, t));
            w[i] -= lr * mh / (std::sqrt(vh) + eps);
        }
    }
};

std::vector<double> normals(Rng& rng, std::size_t n, double scale = 1.0) {
    std::vector<double> out(n);
    for (auto& v : out) v = scale * rng.normal();
    return out;
}

}  // namespace

TEST_CASE("all-ones mask matches a plain Adam reference") {
    Rng rng(1);
    OptimConfig cfg;
    cfg.beta1 = 0.85;
    cfg.beta2 = 0.99;
    cfg.eps = 1e-8;
    const std::size_t n = 17;
    std::vector<double> w = normals(rng, n), ref = w;
    AdamState state = AdamState::zeros(n);
    PlainAdam oracle;
    const GradMask ones = GradMask::ones(n);
    for (int s = 0; s < 50; ++s) {
        const auto g = normals(rng, n);
        const double lr = 0.01 * (1 + s % 3);
        child_tuning_adam_step(w, g, ones, state, cfg, lr);
        oracle.step(ref, g, lr, cfg.beta1, cfg.beta2, cfg.eps);
    }
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(w[i] - ref[i]) < 1e-12);
    CHECK(state.t == 50);
}

TEST_CASE("all-zeros mask leaves params and moments untouched") {
    Rng rng(2);
    OptimConfig cfg;
    cfg.weight_decay = 0.1;
    std::vector<double> w = normals(rng, 5);
    const auto w0 = w;
    AdamState state = AdamState::zeros(5);
    const GradMask zeros(std::vector<double>(5, 0.0), MaskKind::Custom, 1.0);
    for (int s = 0; s < 3; ++s) child_tuning_adam_step(w, normals(rng, 5), zeros, state, cfg, 0.1);
    CHECK(w == w0);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(state.m[i] == 0.0);
        CHECK(state.v[i] == 0.0);
    }
    CHECK(state.t == 3);
}

TEST_CASE("single-parameter hand trace") {
    OptimConfig cfg;
    cfg.eps = 0.0;
    std::vector<double> w{0.0};
    AdamState state = AdamState::zeros(1);
    child_tuning_adam_step(w, std::vector<double>{1.0}, GradMask::ones(1), state, cfg, 0.1);
    CHECK(state.m[0] == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(state.v[0] == doctest::Approx(0.001).epsilon(1e-15));
    CHECK(w[0] == doctest::Approx(-0.1).epsilon(1e-14));
    CHECK(state.t == 1);
}

TEST_CASE("bias-corrected first moment equals a constant gradient") {
    OptimConfig cfg;
    std::vector<double> w{0.5, -0.5};
    AdamState state = AdamState::zeros(2);
    const std::vector<double> g{0.7, -2.5};
    for (int s = 1; s <= 100; ++s) {
        child_tuning_adam_step(w, g, GradMask::ones(2), state, cfg, 1e-3);
        for (std::size_t i = 0; i < 2; ++i) {
            const double mh = state.m[i] / (1.0 - std::pow(cfg.beta1, static_cast<double>(state.t)));
            CHECK(std::abs(mh - g[i]) < 1e-12);
        }
    }
}

TEST_CASE("fixed mask keeps non-child params and moments exactly zero-changed") {
    Rng rng(3);
    OptimConfig cfg;
    cfg.weight_decay = 0.01;
    const std::size_t n = 40;
    std::vector<double> w = normals(rng, n);
    const auto w0 = w;
    const GradMask mask = random_fixed_mask(n, {0}, 0.3, rng);
    AdamState state = AdamState::zeros(n);
    for (int s = 0; s < 30; ++s) {
        const std::uint64_t before = state.t;
        child_tuning_adam_step(w, normals(rng, n), mask, state, cfg, 0.05);
        CHECK(state.t == before + 1);
        CHECK(all_finite(w));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask.is_child(i)) {
            CHECK(w[i] == w0[i]);
            CHECK(state.m[i] == 0.0);
            CHECK(state.v[i] == 0.0);
        } else {
            CHECK(w[i] != w0[i]);
            CHECK(state.v[i] >= 0.0);
        }
    }
}

TEST_CASE("decoupled weight decay applies only to child coordinates") {
    OptimConfig cfg;
    cfg.weight_decay = 0.5;
    std::vector<double> w{2.0, 2.0};
    AdamState state = AdamState::zeros(2);
    const GradMask mask({1.0, 0.0}, MaskKind::Custom, 1.0);
    child_tuning_adam_step(w, std::vector<double>{0.0, 0.0}, mask, state, cfg, 0.1);
    CHECK(w[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
    CHECK(w[1] == 2.0);
}

TEST_CASE("adam step input errors") {
    OptimConfig cfg;
    std::vector<double> w{1.0};
    AdamState state = AdamState::zeros(1);
    CHECK_THROWS_AS(child_tuning_adam_step(w, std::vector<double>{NAN}, GradMask::ones(1), state, cfg, 0.1),
                    NumericError);
    CHECK_THROWS_AS(child_tuning_adam_step(w, std::vector<double>{1.0, 2.0}, GradMask::ones(1), state, cfg, 0.1),
                    ShapeError);
    state.t = std::numeric_limits<std::uint64_t>::max();
    CHECK_THROWS_AS(child_tuning_adam_step(w, std::vector<double>{1.0}, GradMask::ones(1), state, cfg, 0.1),
                    NumericError);
}

TEST_CASE("optimizer config validation") {
    OptimConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.beta1 = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = OptimConfig{};
    cfg.eps = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = OptimConfig{};
    cfg.warmup_steps = 5;
    cfg.total_steps = 4;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("masked SGD") {
    const std::vector<double> w{0.0, 0.0}, g{1.0, 2.0};
    CHECK(sgd_masked_step(w, g, GradMask::ones(2), 1.0) == std::vector<double>{-1.0, -2.0});
    CHECK(sgd_masked_step(w, g, GradMask::ones(2), 0.0) == w);
    CHECK(sgd_masked_step(w, g, GradMask({0.0, 0.0}, MaskKind::Custom, 1.0), 1.0) == w);
}

TEST_CASE("linear warmup then linear decay") {
    OptimConfig cfg;
    cfg.eta = 0.1;
    cfg.warmup_steps = 10;
    cfg.total_steps = 20;
    CHECK(lr_schedule(0, cfg) == 0.0);
    CHECK(lr_schedule(10, cfg) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(lr_schedule(15, cfg) == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(lr_schedule(20, cfg) == 0.0);
    CHECK_THROWS_AS(lr_schedule(21, cfg), ConfigError);
    cfg.warmup_steps = 0;
    CHECK(lr_schedule(0, cfg) == 0.1);
}

TEST_CASE("global norm clipping") {
    const std::vector<double> small{0.3, 0.4};
    CHECK(clip_global_norm(small, 1.0) == small);
    const auto c = clip_global_norm(std::vector<double>{3.0, 4.0}, 1.0);
    CHECK(c[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(c[1] == doctest::Approx(0.8).epsilon(1e-15));
    Rng rng(4);
    for (int t = 0; t < 200; ++t) {
        const auto g = normals(rng, 1 + rng.index(20), 10.0 * rng.uniform());
        const double m = 0.1 + rng.uniform();
        CHECK(l2_norm(clip_global_norm(g, m)) <= m + 1e-12);
    }
    CHECK_THROWS_AS(clip_global_norm(small, 0.0), ConfigError);
}

TEST_CASE("weight decay towards pretrained weights") {
    const std::vector<double> w0{1.0, -1.0};
    const Penalty same = weight_decay_to_pretrained_loss(w0, w0, 0.7);
    CHECK(same.value == 0.0);
    CHECK(same.grad == std::vector<double>{0.0, 0.0});
    CHECK(weight_decay_to_pretrained_loss(std::vector<double>{5.0, 5.0}, w0, 0.0).value == 0.0);
    const Penalty p = weight_decay_to_pretrained_loss(std::vector<double>{2.0, 1.0}, w0, 0.5);
    CHECK(p.value == doctest::Approx(2.5));
    CHECK(p.grad[0] == doctest::Approx(1.0));
    CHECK(p.grad[1] == doctest::Approx(2.0));
}

TEST_CASE("optimizer state round trip") {
    Rng rng(5);
    AdamState s{normals(rng, 6), std::vector<double>(6, 0.25), 42};
    const auto path = (testing::temp_dir("adam") / "state.json").string();
    save_adam_state(path, s);
    CHECK(load_adam_state(path) == s);
}
