#include "childgrad/experiments.hpp"

#include <cstdio>
#include <numeric>

#include "childgrad/error.hpp"
#include "childgrad/fisher.hpp"
#include "childgrad/masking.hpp"

namespace childgrad {

namespace {

std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

double mean_of(std::span<const double> v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::vector<double> per_seed(const RunConfig& config, std::span<const std::uint64_t> seeds, const std::string& metric) {
    const Aggregate agg = replicate_and_aggregate(config, seeds);
    if (agg.partial) {
        throw NumericError(config.method.label() + " failed on seed " + std::to_string(agg.failures.front().first) +
                           ": " + agg.failures.front().second);
    }
    std::vector<double> out;
    for (const RunReport& r : agg.runs) out.push_back(r.final_metrics.at(metric));
    return out;
}

ExperimentResult finish(std::vector<std::pair<std::string, double>> means, std::vector<PairedComparison> comparisons,
                        const char* relation) {
    ExperimentResult r;
    r.pass = true;
    for (const auto& [label, m] : means) r.summary += (r.summary.empty() ? "" : " ") + label + "=" + fmt4(m);
    for (const auto& c : comparisons) {
        r.pass = r.pass && c.holds();
        r.summary += "; " + c.better + relation + c.worse + " " + (c.mean_diff >= 0 ? "+" : "") + fmt4(c.mean_diff);
    }
    r.means = std::move(means);
    r.comparisons = std::move(comparisons);
    return r;
}

DataSpec moons(std::size_t n, double flip, double rotate) {
    DataSpec d;
    d.generator = "two_moons";
    d.n = n;
    d.dim = 10;
    d.noise = 0.2;
    d.label_flip = flip;
    d.rotate = rotate;
    d.train_fraction = 0.5;
    return d;
}

}  // namespace

RunConfig ablation_config(Method method, double p) {
    RunConfig c;
    c.model.input_dim = 10;
    c.model.hidden_dims = {32, 32};
    c.model.output = OutputKind::Classifier;
    c.model.num_classes = 2;
    c.model.activation = Activation::Tanh;
    c.data = moons(1000, 0.2, 0.6);
    c.pretrained.kind = PretrainSpec::Kind::Source;
    c.pretrained.source = moons(2000, 0.0, 0.0);
    c.pretrained.source.train_fraction = 0.8;
    c.pretrained.epochs = 20;
    c.pretrained.seed = 1000;
    c.method.kind = method;
    c.method.p = p;
    c.optim.eta = 1e-2;
    c.epochs = 40;
    c.batch_size = 16;
    return c;
}

RunConfig low_resource_config(Method method, double p) {
    RunConfig c = ablation_config(method, p);
    c.subsample_n = 100;
    return c;
}

RunConfig flatness_config(double p_f) {
    RunConfig c;
    c.model.input_dim = 10;
    c.model.hidden_dims = {32, 32};
    c.model.activation = Activation::Tanh;
    c.data.generator = "two_gaussians";
    c.data.n = 600;
    c.data.dim = 10;
    c.data.separation = 2.0;
    c.data.train_fraction = 0.5;
    c.method = {Method::ChildF, p_f, 0, 0.0};
    c.optim.eta = 0.05;
    c.optim.weight_decay = 0.05;
    c.epochs = 100;
    c.batch_size = 16;
    c.sharpness_iters = 30;
    return c;
}

std::vector<std::uint64_t> analog_seeds() { return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}; }
std::vector<std::uint64_t> overlap_seeds() { return {1, 2, 3, 4, 5}; }

PairedComparison paired_comparison(const std::string& better, std::span<const double> a, const std::string& worse,
                                   std::span<const double> b, bool strict) {
    if (a.size() != b.size() || a.empty()) throw ShapeError("paired comparison needs equal, non-empty samples");
    std::vector<double> diff(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
    return {better, worse, mean_of(diff), strict};
}

ExperimentResult run_ablation(std::span<const std::uint64_t> seeds) {
    const double p = 0.05;
    const auto acc = [&](Method m) { return per_seed(ablation_config(m, p), seeds, "eval.accuracy"); };
    const auto child = acc(Method::ChildD), random = acc(Method::RandomD), vanilla = acc(Method::Vanilla),
               lowest = acc(Method::LowestD), prune = acc(Method::PruneD);
    return finish({{"child_d", mean_of(child)},
                   {"random_d", mean_of(random)},
                   {"vanilla", mean_of(vanilla)},
                   {"lowest_d", mean_of(lowest)},
                   {"prune_d", mean_of(prune)}},
                  {paired_comparison("child_d", child, "random_d", random, true),
                   paired_comparison("random_d", random, "vanilla", vanilla, true),
                   paired_comparison("child_d", child, "lowest_d", lowest, true),
                   paired_comparison("child_d", child, "prune_d", prune, true)},
                  ">");
}

ExperimentResult run_low_resource(std::span<const std::uint64_t> seeds) {
    const auto vanilla = per_seed(low_resource_config(Method::Vanilla, 1.0), seeds, "eval.accuracy");
    const auto child_d = per_seed(low_resource_config(Method::ChildD, 0.05), seeds, "eval.accuracy");
    const auto child_f = per_seed(low_resource_config(Method::ChildF, 0.3), seeds, "eval.accuracy");
    return finish({{"vanilla", mean_of(vanilla)}, {"child_d", mean_of(child_d)}, {"child_f", mean_of(child_f)}},
                  {paired_comparison("child_d", child_d, "vanilla", vanilla, false),
                   paired_comparison("child_f", child_f, "vanilla", vanilla, false)},
                  ">=");
}

ExperimentResult run_flatness(std::span<const std::uint64_t> seeds) {
    std::vector<std::vector<double>> sharp;
    std::vector<std::pair<std::string, double>> means;
    const std::vector<double> grid{1.0, 0.4, 0.2};
    for (double p : grid) {
        sharp.push_back(per_seed(flatness_config(p), seeds, "sharpness"));
        means.emplace_back("sharpness(" + fmt4(p).substr(0, 3) + ")", mean_of(sharp.back()));
    }
    std::vector<PairedComparison> comps;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        comps.push_back(paired_comparison(means[i].first, sharp[i], means[i + 1].first, sharp[i + 1], false));
    }
    return finish(std::move(means), std::move(comps), ">=");
}

ExperimentResult run_overlap(std::span<const std::uint64_t> seeds) {
    ModelSpec cls;
    cls.input_dim = 10;
    cls.hidden_dims = {32, 32};
    cls.output = OutputKind::Logistic;
    ModelSpec reg = cls;
    reg.output = OutputKind::Regressor;
    const double p = 0.3;

    std::vector<double> similar, different;
    for (std::uint64_t seed : seeds) {
        const ParamVector backbone = init_params(cls, seed);
        const auto mask_for = [&](const ModelSpec& spec, const std::string& generator, std::uint64_t data_seed) {
            DataSpec d;
            d.generator = generator;
            d.n = 400;
            d.dim = 10;
            d.noise = 0.5;
            const DataSplits splits = make_dataset(d, data_seed);
            const FisherDiag f = empirical_fisher_diag(spec, backbone, splits.train);
            return fisher_topk_mask(f.scores, {}, p);
        };
        const GradMask a = mask_for(cls, "two_gaussians", 1000 + 2 * seed);
        const GradMask b = mask_for(cls, "two_gaussians", 1001 + 2 * seed);
        const GradMask r = mask_for(reg, "linear_regression", 1000 + 2 * seed);
        similar.push_back(jaccard(a, b));
        different.push_back(jaccard(a, r));
    }
    return finish({{"similar", mean_of(similar)}, {"different", mean_of(different)}},
                  {paired_comparison("similar", similar, "different", different, true)}, ">");
}

}  // namespace childgrad
