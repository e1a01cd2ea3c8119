#include "childgrad/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numeric>
#include <thread>

#include "childgrad/config.hpp"
#include "childgrad/error.hpp"
#include "childgrad/fisher.hpp"
#include "childgrad/numeric.hpp"
#include "childgrad/random.hpp"
#include "childgrad/theory.hpp"

namespace childgrad {

const char* method_name(Method method) {
    switch (method) {
        case Method::Vanilla: return "vanilla";
        case Method::ChildF: return "child_f";
        case Method::ChildD: return "child_d";
        case Method::RandomD: return "random_d";
        case Method::LowestD: return "lowest_d";
        case Method::PruneD: return "prune_d";
        case Method::TopkLayers: return "topk_layers";
        case Method::WeightDecayW0: return "weight_decay_w0";
    }
    return "unknown";
}

Method parse_method(const std::string& name) {
    for (auto m : {Method::Vanilla, Method::ChildF, Method::ChildD, Method::RandomD, Method::LowestD, Method::PruneD,
                   Method::TopkLayers, Method::WeightDecayW0}) {
        if (name == method_name(m)) return m;
    }
    throw ConfigError("unknown method '" + name + "'");
}

std::string MethodSpec::label() const {
    char buf[64];
    switch (kind) {
        case Method::Vanilla: return "vanilla";
        case Method::TopkLayers: std::snprintf(buf, sizeof(buf), "topk_layers(%zu)", k_layers); return buf;
        case Method::WeightDecayW0: std::snprintf(buf, sizeof(buf), "weight_decay_w0(%g)", lambda); return buf;
        default: std::snprintf(buf, sizeof(buf), "%s(%g)", method_name(kind), p); return buf;
    }
}

void RunConfig::validate() const {
    model.validate();
    optim.validate();
    if (epochs == 0) throw ConfigError("training.epochs must be positive");
    if (batch_size == 0) throw ConfigError("training.batch_size must be positive");
    if (!(warmup_ratio >= 0.0 && warmup_ratio <= 1.0)) throw ConfigError("training.warmup_ratio must lie in [0, 1]");
    switch (method.kind) {
        case Method::ChildF:
        case Method::ChildD:
        case Method::RandomD:
        case Method::LowestD:
        case Method::PruneD:
            if (!(method.p > 0.0 && method.p <= 1.0)) throw ConfigError("method.p must lie in (0, 1]");
            break;
        case Method::WeightDecayW0:
            if (!(method.lambda >= 0.0)) throw ConfigError("method.lambda must be nonnegative");
            break;
        default:
            break;
    }
    if (subsample_n && *subsample_n == 0) throw ConfigError("training.subsample_n must be positive");
    if (data.generator != "csv" && data.generator != "linear_regression" && model.is_classifier() &&
        model.class_count() < 2) {
        throw ConfigError("classifier needs at least two classes");
    }
    if (data.is_regression() == model.is_classifier()) {
        throw ConfigError("model output '" + std::string(output_name(model.output)) + "' does not fit generator '" +
                          data.generator + "'");
    }
}

namespace {

constexpr std::uint64_t kStreamShuffle = 11;
constexpr std::uint64_t kStreamMask = 12;
constexpr std::uint64_t kStreamInit = 13;
constexpr std::uint64_t kStreamSubsample = 14;
constexpr std::uint64_t kStreamSharpness = 15;
constexpr std::uint64_t kStreamHead = 16;

std::size_t steps_per_epoch(std::size_t n, std::size_t batch) {
    return (n + batch - 1) / batch;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch, Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < n; i += batch) {
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch)));
    }
    return out;
}

// Plain Adam with clipping and the linear schedule; used for pretraining and probes.
void fit_vanilla(const ModelSpec& spec, ParamVector& params, const Dataset& train, std::size_t epochs,
                 std::size_t batch, double eta, Rng& rng) {
    const Graph graph = build_graph(spec);
    OptimConfig opt;
    opt.eta = eta;
    opt.total_steps = epochs * steps_per_epoch(train.size(), batch);
    opt.warmup_steps = opt.total_steps / 10;
    AdamState state = AdamState::zeros(params.size());
    const GradMask all = GradMask::ones(params.size());
    std::size_t step = 0;
    for (std::size_t e = 0; e < epochs; ++e) {
        for (const auto& idx : epoch_batches(train.size(), batch, rng)) {
            auto r = forward_backward(graph, params, train.batch(idx));
            auto g = clip_global_norm(r.grads, opt.clip_max_norm);
            child_tuning_adam_step(params.values(), g, all, state, opt, lr_schedule(step, opt));
            ++step;
        }
    }
}

void add_metrics(std::map<std::string, double>& out, const std::string& set, const ModelSpec& spec,
                 const ParamVector& params, const Dataset& data) {
    const Metric primary = default_metric(spec);
    out[set + "." + metric_name(primary)] = evaluate(spec, params, data, primary);
    out[set + "." + metric_name(Metric::MeanLogLikelihood)] = evaluate(spec, params, data, Metric::MeanLogLikelihood);
}

std::string index_hash(const IndexSet& idx) {
    std::vector<double> as_double(idx.begin(), idx.end());
    return hex64(hash_doubles(as_double));
}

}  // namespace

ParamVector derive_pretrained(const RunConfig& config) {
    const std::uint64_t seed = config.pretrained.seed.value_or(config.seed);
    ParamVector params;
    switch (config.pretrained.kind) {
        case PretrainSpec::Kind::Fresh:
            params = init_params(config.model, Rng(seed).derive(kStreamInit).seed());
            break;
        case PretrainSpec::Kind::Checkpoint: {
            Checkpoint ck = load_checkpoint(config.pretrained.path);
            if (!(ck.spec == config.model)) {
                throw ConfigError("checkpoint '" + config.pretrained.path + "' was saved for a different model spec");
            }
            params = std::move(ck.params);
            break;
        }
        case PretrainSpec::Kind::Source: {
            params = init_params(config.model, Rng(seed).derive(kStreamInit).seed());
            DataSplits src = make_dataset(config.pretrained.source, Rng(seed).derive(21).seed());
            src.train.validate(config.model.class_count());
            Rng rng = Rng(seed).derive(22);
            fit_vanilla(config.model, params, src.train, config.pretrained.epochs, config.pretrained.batch_size,
                        config.pretrained.eta, rng);
            break;
        }
    }
    if (config.pretrained.reinit_head) {
        const ParamVector fresh = init_params(config.model, Rng(config.seed).derive(kStreamHead).seed());
        for (const auto& name : config.model.head_param_names()) {
            auto src = fresh.view(name);
            std::copy(src.begin(), src.end(), params.view(name).begin());
        }
    }
    return params;
}

RunResult train_run(const RunConfig& config, const TrainHooks& hooks) {
    const auto t0 = std::chrono::steady_clock::now();
    config.validate();
    const ModelSpec& spec = config.model;
    const Rng root(config.seed);

    DataSplits data = make_dataset(config.data, config.seed);
    if (config.subsample_n) {
        data.train = subsample(data.train, *config.subsample_n, root.derive(kStreamSubsample).seed(),
                               spec.class_count());
    }
    data.train.validate(spec.class_count());
    data.eval.validate(spec.class_count());
    if (data.train.dim != spec.input_dim) {
        throw ConfigError("dataset has " + std::to_string(data.train.dim) + " features, model expects " +
                          std::to_string(spec.input_dim));
    }

    RunResult result;
    result.pretrained = derive_pretrained(config);
    ParamVector params = result.pretrained;
    const std::size_t n_params = params.size();
    const IndexSet head =
        config.mask_head ? IndexSet{} : params.registry().indices_of(spec.head_param_names());

    RunReport& report = result.report;
    report.config_hash = config_hash(config);
    report.seed = config.seed;
    report.method = config.method.label();

    // Fixed child network, derived once at w_0.
    std::optional<GradMask> fixed;
    const Method kind = config.method.kind;
    if (kind == Method::ChildD || kind == Method::LowestD || kind == Method::PruneD) {
        const FisherDiag fisher = empirical_fisher_diag(spec, params, data.train, config.fisher_samples);
        report.fisher_samples = fisher.dataset_size;
        fixed = kind == Method::LowestD ? lowest_fisher_mask(fisher.scores, head, config.method.p)
                                        : fisher_topk_mask(fisher.scores, head, config.method.p);
        if (kind == Method::PruneD) {
            params.raw() = prune_params(params.values(), *fixed);
        }
    } else if (kind == Method::RandomD) {
        Rng mask_rng = root.derive(kStreamMask);
        fixed = random_fixed_mask(n_params, head, config.method.p, mask_rng);
    } else if (kind == Method::TopkLayers) {
        fixed = topk_layer_mask(params.registry(), config.method.k_layers, head);
    }
    result.start = params;

    OptimConfig opt = config.optim;
    opt.total_steps = config.epochs * steps_per_epoch(data.train.size(), config.batch_size);
    opt.warmup_steps = static_cast<std::size_t>(std::llround(config.warmup_ratio * static_cast<double>(opt.total_steps)));
    opt.validate();
    report.total_steps = opt.total_steps;
    report.warmup_steps = opt.warmup_steps;

    const Graph graph = build_graph(spec);
    Rng shuffle_rng = root.derive(kStreamShuffle);
    Rng mask_rng = root.derive(kStreamMask);
    AdamState state = AdamState::zeros(n_params);
    const GradMask all_ones = GradMask::ones(n_params);
    std::size_t step = 0;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<double> batch_losses;
        for (const auto& idx : epoch_batches(data.train.size(), config.batch_size, shuffle_rng)) {
            LossAndGrad r;
            try {
                r = forward_backward(graph, params, data.train.batch(idx));
                if (kind == Method::WeightDecayW0) {
                    const Penalty pen =
                        weight_decay_to_pretrained_loss(params.values(), result.start.values(), config.method.lambda);
                    r.loss += pen.value;
                    for (std::size_t i = 0; i < n_params; ++i) r.grads[i] += pen.grad[i];
                }
            } catch (const NumericError& e) {
                throw NumericError("diverged at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                                   ": " + e.what());
            }
            batch_losses.push_back(r.loss);
            std::vector<double> g = opt.clipping() ? clip_global_norm(r.grads, opt.clip_max_norm) : std::move(r.grads);

            GradMask step_mask;
            const GradMask* mask = &all_ones;
            if (kind == Method::ChildF) {
                step_mask = bernoulli_mask(n_params, head, config.method.p, mask_rng);
                mask = &step_mask;
            } else if (fixed) {
                mask = &*fixed;
            }
            if (hooks.on_step) hooks.on_step(step, *mask);
            child_tuning_adam_step(params.values(), g, *mask, state, opt, lr_schedule(step, opt));
            if (!all_finite(params.values())) {
                throw NumericError("diverged at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                                   ": non-finite parameters");
            }
            ++step;
        }
        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.train_loss = pairwise_sum(batch_losses) / static_cast<double>(batch_losses.size());
        add_metrics(rec.metrics, "eval", spec, params, data.eval);
        for (const auto& [name, set] : data.shifted) add_metrics(rec.metrics, name, spec, params, set);
        report.epochs.push_back(std::move(rec));
    }

    report.final_metrics = report.epochs.back().metrics;
    report.final_metrics["train.loss"] = report.epochs.back().train_loss;
    if (config.sharpness_iters > 0) {
        Rng srng = root.derive(kStreamSharpness);
        report.sharpness = sharpness_power_iteration(spec, params, data.train, config.sharpness_iters, srng);
        report.final_metrics["sharpness"] = *report.sharpness;
    }
    for (const auto& [k, v] : report.final_metrics) {
        if (!std::isfinite(v)) throw NumericError("non-finite final metric '" + k + "'");
    }
    if (fixed) {
        MaskSummary ms;
        ms.kind = mask_kind_name(fixed->kind());
        ms.p = fixed->p();
        ms.positive_count = fixed->positive_count();
        ms.param_count = fixed->size();
        ms.positive_hash = index_hash(fixed->positive_indices());
        report.mask = ms;
    } else if (kind == Method::ChildF) {
        MaskSummary ms;
        ms.kind = mask_kind_name(MaskKind::BernoulliF);
        ms.p = config.method.p;
        ms.param_count = n_params;
        report.mask = ms;
    }

    result.final_params = std::move(params);
    result.state = std::move(state);
    result.fixed_mask = std::move(fixed);
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

double linear_probe(const ModelSpec& spec, const ParamVector& frozen, const DataSplits& probe,
                    std::size_t probe_epochs, std::uint64_t seed) {
    if (probe.train.empty() || probe.eval.empty()) throw ConfigError("probe needs nonempty train and eval sets");
    if (probe_epochs == 0) throw ConfigError("probe needs at least one epoch");
    double max_label = 0.0;
    for (double y : probe.train.targets) max_label = std::max(max_label, y);
    for (double y : probe.eval.targets) max_label = std::max(max_label, y);
    const auto classes = std::max<std::size_t>(2, static_cast<std::size_t>(max_label) + 1);

    auto featurize = [&](const Dataset& d) {
        Dataset out;
        const Tensor rep = spec.depth() == 0 ? Tensor({d.size(), d.dim}, d.features) : representations(spec, frozen, d);
        out.dim = rep.dim(1);
        out.features.assign(rep.data().begin(), rep.data().end());
        out.targets = d.targets;
        return out;
    };
    const Dataset train = featurize(probe.train);
    const Dataset eval = featurize(probe.eval);

    ModelSpec head;
    head.input_dim = train.dim;
    head.output = OutputKind::Classifier;
    head.num_classes = classes;
    train.validate(classes);
    eval.validate(classes);

    Rng rng(seed);
    ParamVector params = init_params(head, rng.derive(kStreamInit).seed());
    Rng shuffle = rng.derive(kStreamShuffle);
    fit_vanilla(head, params, train, probe_epochs, 32, 1e-2, shuffle);
    return evaluate(head, params, eval, Metric::Accuracy);
}

MetricSummary summarize(std::span<const double> values) {
    MetricSummary s;
    s.count = values.size();
    if (values.empty()) return s;
    // Sorting first makes the reduction independent of seed order.
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    s.mean = pairwise_sum(sorted) / n;
    s.max = sorted.back();
    if (sorted.size() > 1) {
        std::vector<double> sq(sorted.size());
        for (std::size_t i = 0; i < sorted.size(); ++i) sq[i] = (sorted[i] - s.mean) * (sorted[i] - s.mean);
        std::sort(sq.begin(), sq.end());
        s.stddev = std::sqrt(pairwise_sum(sq) / (n - 1.0));
    }
    return s;
}

Aggregate aggregate_reports(std::span<const RunReport> reports) {
    Aggregate agg;
    std::map<std::string, std::vector<double>> values;
    for (const auto& r : reports) {
        if (agg.config_hash.empty()) {
            agg.config_hash = r.config_hash;
            agg.method = r.method;
        }
        agg.seeds.push_back(r.seed);
        agg.runs.push_back(r);
        for (const auto& [k, v] : r.final_metrics) values[k].push_back(v);
    }
    for (auto& [k, v] : values) agg.metrics[k] = summarize(v);
    return agg;
}

Aggregate replicate_and_aggregate(const RunConfig& config, std::span<const std::uint64_t> seeds, std::size_t jobs,
                                  const RunCallback& on_result) {
    if (seeds.empty()) throw ConfigError("replicate_and_aggregate needs at least one seed");
    std::vector<std::optional<RunReport>> reports(seeds.size());
    std::vector<std::string> errors(seeds.size());
    std::size_t next = 0;
    std::mutex lock;
    auto worker = [&] {
        for (;;) {
            std::size_t i;
            {
                std::lock_guard<std::mutex> g(lock);
                if (next >= seeds.size()) return;
                i = next++;
            }
            RunConfig c = config;
            c.seed = seeds[i];
            try {
                RunResult r = train_run(c);
                if (on_result) {
                    std::lock_guard<std::mutex> g(lock);
                    on_result(r);
                }
                reports[i] = std::move(r.report);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    const std::size_t threads = std::clamp<std::size_t>(jobs, 1, seeds.size());
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    std::vector<RunReport> ok;
    std::vector<std::pair<std::uint64_t, std::string>> failures;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (reports[i]) {
            ok.push_back(*reports[i]);
        } else {
            failures.emplace_back(seeds[i], errors[i]);
        }
    }
    Aggregate agg = aggregate_reports(ok);
    if (agg.config_hash.empty()) {
        agg.config_hash = config_hash(config);
        agg.method = config.method.label();
    }
    agg.failures = std::move(failures);
    agg.partial = !agg.failures.empty();
    return agg;
}

std::vector<std::vector<double>> overlap_matrix_from_files(std::span<const std::string> mask_files) {
    std::vector<GradMask> masks;
    for (const auto& f : mask_files) masks.push_back(load_mask(f));
    return overlap_matrix(masks);
}

}  // namespace childgrad
