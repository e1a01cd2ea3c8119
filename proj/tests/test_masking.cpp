#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "childgrad/error.hpp"
#include "childgrad/masking.hpp"
#include "childgrad/numeric.hpp"
#include "support.hpp"

using namespace childgrad;

namespace {

IndexSet top_by_full_sort(const std::vector<double>& f, const IndexSet& head, double p, bool highest) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (!std::binary_search(head.begin(), head.end(), i)) idx.push_back(i);
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return highest ? f[a] > f[b] : f[a] < f[b];
    });
    const auto k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(idx.size()) - 1e-9));
    IndexSet out(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(std::min(k, idx.size())));
    out.insert(out.end(), head.begin(), head.end());
    std::sort(out.begin(), out.end());
    return out;
}

GradMask from_set(std::size_t n, const std::set<std::size_t>& s) {
    std::vector<double> v(n, 0.0);
    for (auto i : s) v[i] = 1.0;
    return GradMask(v, MaskKind::Custom, 1.0);
}

ModelSpec two_hidden() {
    ModelSpec s;
    s.input_dim = 2;
    s.hidden_dims = {3, 4};
    return s;
}

}  // namespace

TEST_CASE("bernoulli mask with p=1 is all ones") {
    Rng rng(1);
    const GradMask m = bernoulli_mask(500, {0, 1}, 1.0, rng);
    for (double s : m.scales()) CHECK(s == 1.0);
}

TEST_CASE("bernoulli mask with p=0.5: kept fraction and scale") {
    Rng rng(2);
    const std::size_t n = 1000000;
    const GradMask m = bernoulli_mask(n, {}, 0.5, rng);
    std::size_t kept = 0;
    for (double s : m.scales()) {
        if (s != 0.0) {
            ++kept;
            CHECK(s == 2.0);
        }
    }
    CHECK(std::abs(static_cast<double>(kept) / n - 0.5) < 0.002);
}

TEST_CASE("bernoulli mask keeps head entries at scale one") {
    Rng rng(3);
    const IndexSet head{3, 4, 9};
    for (int t = 0; t < 20; ++t) {
        const GradMask m = bernoulli_mask(10, head, 0.3, rng);
        for (auto i : head) CHECK(m.scales()[i] == 1.0);
    }
    CHECK_THROWS_AS(bernoulli_mask(10, {}, 0.0, rng), ConfigError);
    CHECK_THROWS_AS(bernoulli_mask(10, {}, 1.5, rng), ConfigError);
    CHECK_THROWS_AS(bernoulli_mask(10, {10}, 0.5, rng), ShapeError);
}

TEST_CASE("bernoulli masking is unbiased") {
    Rng rng(4);
    const std::vector<double> g{1.0, -2.0, 0.5, 3.0};
    const double p = 0.3;
    const std::size_t draws = 20000;
    std::vector<double> sum(g.size(), 0.0);
    for (std::size_t t = 0; t < draws; ++t) {
        const auto masked = apply_mask(g, bernoulli_mask(g.size(), {}, p, rng));
        for (std::size_t i = 0; i < g.size(); ++i) sum[i] += masked[i];
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double sd = std::abs(g[i]) * std::sqrt((1.0 - p) / p);
        CHECK(std::abs(sum[i] / draws - g[i]) < 3.0 * sd / std::sqrt(static_cast<double>(draws)));
    }
}

TEST_CASE("fisher top-k examples") {
    const std::vector<double> f{0.1, 0.9, 0.5, 0.2};
    CHECK(fisher_topk_mask(f, {}, 0.5).positive_indices() == IndexSet{1, 2});
    const GradMask all = fisher_topk_mask(f, {}, 1.0);
    for (double s : all.scales()) CHECK(s == 1.0);
    CHECK(fisher_topk_mask(std::vector<double>{0.5, 0.5}, {}, 0.5).positive_indices() == IndexSet{0});
    CHECK(fisher_topk_mask(f, {}, 0.5).kind() == MaskKind::FisherD);
    CHECK_THROWS_AS(fisher_topk_mask(std::vector<double>{-1.0, 0.0}, {}, 0.5), NumericError);
}

TEST_CASE("lowest fisher examples") {
    const std::vector<double> f{0.1, 0.9, 0.5, 0.2};
    CHECK(lowest_fisher_mask(f, {}, 0.5).positive_indices() == IndexSet{0, 3});
    CHECK(lowest_fisher_mask(f, {}, 1.0).positive_count() == 4);
    CHECK(lowest_fisher_mask(std::vector<double>{0.5, 0.5}, {}, 0.5).positive_indices() == IndexSet{0});
}

TEST_CASE("top and lowest masks are disjoint at half ratio") {
    Rng rng(5);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> f(2 * (1 + rng.index(30)));
        for (auto& v : f) v = rng.uniform();
        const auto top = fisher_topk_mask(f, {}, 0.5).positive_indices();
        const auto low = lowest_fisher_mask(f, {}, 0.5).positive_indices();
        IndexSet both;
        std::set_intersection(top.begin(), top.end(), low.begin(), low.end(), std::back_inserter(both));
        CHECK(both.empty());
        CHECK(top.size() + low.size() == f.size());
    }
}

TEST_CASE("top-k selection equals a full-sort oracle") {
    Rng rng(6);
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 1 + rng.index(200);
        std::vector<double> f(n);
        for (auto& v : f) v = rng.bernoulli(0.2) ? 0.25 : rng.uniform();
        IndexSet head;
        for (std::size_t i = 0; i < n; ++i) {
            if (rng.bernoulli(0.1)) head.push_back(i);
        }
        const double p = std::max(0.01, rng.uniform());
        CAPTURE(t);
        CHECK(fisher_topk_mask(f, head, p).positive_indices() == top_by_full_sort(f, head, p, true));
        CHECK(lowest_fisher_mask(f, head, p).positive_indices() == top_by_full_sort(f, head, p, false));
    }
}

TEST_CASE("fixed masks have ceil(p*n) non-head entries and unit scale") {
    Rng rng(7);
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 1 + rng.index(300);
        IndexSet head;
        for (std::size_t i = 0; i < n; ++i) {
            if (rng.bernoulli(0.05)) head.push_back(i);
        }
        const std::size_t free = n - head.size();
        std::vector<double> f(n);
        for (auto& v : f) v = rng.uniform();
        const double p = std::max(1e-3, rng.uniform());
        const std::size_t want = ratio_count(p, free) + head.size();
        for (const GradMask& m :
             {fisher_topk_mask(f, head, p), lowest_fisher_mask(f, head, p), random_fixed_mask(n, head, p, rng)}) {
            CHECK(m.positive_count() == want);
            for (double s : m.scales()) CHECK((s == 0.0 || s == 1.0));
            for (auto i : head) CHECK(m.is_child(i));
        }
    }
}

TEST_CASE("random fixed mask examples") {
    Rng a(8), b(8), c(8);
    CHECK(random_fixed_mask(10, {}, 1.0, a).positive_count() == 10);
    CHECK(random_fixed_mask(10, {}, 0.25, b).positive_count() == 3);
    Rng d(9), e(9);
    CHECK(random_fixed_mask(100, {1, 2}, 0.3, d) == random_fixed_mask(100, {1, 2}, 0.3, e));
    CHECK_THROWS_AS(random_fixed_mask(10, {}, 0.0, c), ConfigError);
}

TEST_CASE("top-k layer masks") {
    const ModelSpec s = two_hidden();
    const ShapeRegistry r = make_registry(s);
    const std::vector<std::string> head_names = s.head_param_names();
    const IndexSet head = r.indices_of(head_names);
    CHECK(topk_layer_mask(r, 2, head).positive_count() == r.total_size());
    CHECK(topk_layer_mask(r, 0, head).positive_indices() == head);
    const std::vector<std::string> top_names{"hidden1.weight", "hidden1.bias", "head.weight", "head.bias"};
    CHECK(topk_layer_mask(r, 1, head).positive_indices() == r.indices_of(top_names));
    CHECK_THROWS_AS(topk_layer_mask(r, 3, head), ConfigError);
}

TEST_CASE("apply_mask and prune_params") {
    const std::vector<double> g{1.0, 2.0};
    CHECK(apply_mask(g, GradMask::ones(2)) == g);
    CHECK(apply_mask(g, GradMask({0.0, 0.0}, MaskKind::Custom, 1.0)) == std::vector<double>{0.0, 0.0});
    CHECK(apply_mask(g, GradMask({0.0, 2.0}, MaskKind::Custom, 1.0)) == std::vector<double>{0.0, 4.0});
    CHECK_THROWS_AS(apply_mask(g, GradMask::ones(3)), ShapeError);

    const std::vector<double> w{3.0, -1.0};
    CHECK(prune_params(w, GradMask::ones(2)) == w);
    CHECK(prune_params(w, GradMask({0.0, 0.0}, MaskKind::Custom, 1.0)) == std::vector<double>{0.0, 0.0});
    CHECK(prune_params(w, GradMask({1.0, 0.0}, MaskKind::Custom, 1.0)) == std::vector<double>{3.0, 0.0});
    CHECK_THROWS_AS(prune_params(w, GradMask::ones(1)), ShapeError);
}

TEST_CASE("jaccard examples") {
    const GradMask a = from_set(4, {0, 1});
    CHECK(jaccard(a, a) == 1.0);
    CHECK(jaccard(a, from_set(4, {2, 3})) == 0.0);
    CHECK(jaccard(a, from_set(4, {1, 2})) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK_THROWS_AS(jaccard(from_set(4, {}), from_set(4, {})), ConfigError);
    CHECK_THROWS_AS(jaccard(a, from_set(5, {0})), ShapeError);
}

TEST_CASE("jaccard properties on random pairs") {
    Rng rng(10);
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 1 + rng.index(60);
        std::set<std::size_t> sa, sb;
        for (std::size_t i = 0; i < n; ++i) {
            if (rng.bernoulli(0.4)) sa.insert(i);
            if (rng.bernoulli(0.4)) sb.insert(i);
        }
        if (sa.empty()) sa.insert(0);
        const GradMask a = from_set(n, sa), b = from_set(n, sb);
        const double j = jaccard(a, b);
        CHECK(j == jaccard(b, a));
        CHECK(jaccard(a, a) == 1.0);
        CHECK((j >= 0.0 && j <= 1.0));
        std::size_t inter = 0;
        for (auto i : sa) inter += sb.count(i);
        CHECK((j == 0.0) == (inter == 0));
    }
}

TEST_CASE("overlap matrix is symmetric with unit diagonal") {
    std::vector<GradMask> masks{from_set(3, {0, 1}), from_set(3, {1, 2}), from_set(3, {0, 1, 2})};
    const auto m = overlap_matrix(masks);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(m[i][i] == 1.0);
        for (std::size_t j = 0; j < 3; ++j) CHECK(m[i][j] == m[j][i]);
    }
    CHECK(m[0][1] == doctest::Approx(1.0 / 3.0));
    std::vector<GradMask> bad{from_set(3, {0}), from_set(4, {0})};
    CHECK_THROWS_AS(overlap_matrix(bad), ShapeError);
    std::vector<GradMask> one{from_set(3, {0})};
    CHECK_THROWS_AS(overlap_matrix(one), ConfigError);
}

TEST_CASE("mask files round trip") {
    const auto dir = testing::temp_dir("masks");
    Rng rng(11);
    const GradMask fixed = random_fixed_mask(50, {0, 1}, 0.2, rng);
    const GradMask scaled = bernoulli_mask(50, {0, 1}, 0.25, rng);
    for (const GradMask& m : {fixed, scaled}) {
        const auto path = (dir / "m.json").string();
        save_mask(path, m);
        CHECK(load_mask(path) == m);
    }
}
