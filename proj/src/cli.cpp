#include "childgrad/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include "childgrad/config.hpp"
#include "childgrad/error.hpp"
#include "childgrad/fisher.hpp"
#include "childgrad/io.hpp"
#include "childgrad/masking.hpp"
#include "childgrad/numeric.hpp"
#include "childgrad/theory.hpp"
#include "childgrad/training.hpp"

namespace fs = std::filesystem;

namespace childgrad {

namespace {

struct Common {
    std::string config_path;
    std::vector<std::uint64_t> seeds;
    std::size_t jobs = 1;
    std::string out = ".";
    bool overwrite = false;
    std::vector<std::string> positional;
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

std::uint64_t env_seed() {
    const char* s = std::getenv("CHILDGRAD_SEED");
    if (!s || !*s) return 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s, &end, 10);
    if (*end != '\0' || s[0] == '-') throw ConfigError(std::string("CHILDGRAD_SEED is not an integer: ") + s);
    return v;
}

bool env_seed_set() {
    const char* s = std::getenv("CHILDGRAD_SEED");
    return s && *s;
}

// Output files of one invocation, checked together before anything is written.
class Outputs {
public:
    Outputs(std::string dir, bool overwrite) : dir_(std::move(dir)), overwrite_(overwrite) {}

    std::string path(const std::string& name) {
        const std::string p = (fs::path(dir_) / name).string();
        planned_.push_back(p);
        return p;
    }

    void claim() const {
        if (!overwrite_) {
            for (const auto& p : planned_) {
                if (fs::exists(p)) throw ConfigError("refusing to overwrite '" + p + "' (pass --overwrite)");
            }
        }
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw ConfigError("cannot create output directory '" + dir_ + "': " + ec.message());
    }

private:
    std::string dir_;
    bool overwrite_;
    std::vector<std::string> planned_;
};

RunConfig load_config(const Common& c, const std::vector<std::string>& overrides) {
    if (c.config_path.empty()) throw ConfigError("--config is required");
    Json doc = read_json(c.config_path);
    apply_overrides(doc, overrides);
    RunConfig config = run_config_from_json(doc);
    if (env_seed_set() && !doc.contains("seed")) config.seed = env_seed();
    return config;
}

std::vector<std::uint64_t> resolve_seeds(const Common& c, std::uint64_t fallback) {
    if (!c.seeds.empty()) return c.seeds;
    if (env_seed_set()) return {env_seed()};
    return {fallback};
}

void split_positional(const std::vector<std::string>& items, std::vector<std::string>& overrides,
                      std::vector<std::string>& files) {
    for (const auto& s : items) (s.find('=') != std::string::npos ? overrides : files).push_back(s);
}

std::string matrix_csv(const std::vector<std::vector<double>>& m, const std::vector<std::string>& names) {
    std::ostringstream out;
    out << "mask";
    for (const auto& n : names) out << "," << n;
    out << "\n";
    for (std::size_t i = 0; i < m.size(); ++i) {
        out << names[i];
        for (double v : m[i]) out << "," << fmt(v);
        out << "\n";
    }
    return out.str();
}

int cmd_train(const Common& c) {
    std::vector<std::string> overrides, extra;
    split_positional(c.positional, overrides, extra);
    if (!extra.empty()) throw ConfigError("unexpected argument '" + extra.front() + "'");
    RunConfig config = load_config(c, overrides);
    config.validate();
    const auto seeds = resolve_seeds(c, config.seed);

    Outputs outs(c.out, c.overwrite);
    std::map<std::uint64_t, std::string> report_paths, mask_paths;
    for (auto s : seeds) {
        report_paths[s] = outs.path("run_seed" + std::to_string(s) + ".json");
        mask_paths[s] = outs.path("mask_seed" + std::to_string(s) + ".json");
    }
    const std::string csv_path = outs.path("aggregate.csv");
    const std::string agg_path = outs.path("aggregate.json");
    const std::string summary_path = outs.path("summary.txt");
    const std::string timing_path = outs.path("timing.csv");
    outs.claim();

    std::map<std::uint64_t, double> timing;
    Aggregate agg = replicate_and_aggregate(config, seeds, c.jobs, [&](const RunResult& r) {
        RunReport report = r.report;
        if (r.fixed_mask) {
            save_mask(mask_paths[report.seed], *r.fixed_mask);
            report.mask->file = fs::path(mask_paths[report.seed]).filename().string();
        }
        write_json(report_paths[report.seed], report_to_json(report));
        timing[report.seed] = report.wall_seconds;
    });

    write_text_atomic(csv_path, aggregate_csv(agg));
    write_json(agg_path, aggregate_to_json(agg));
    std::ostringstream timing_csv;
    timing_csv << "seed,wall_seconds\n";
    for (const auto& [s, t] : timing) timing_csv << s << "," << fmt(t) << "\n";
    write_text_atomic(timing_path, timing_csv.str());

    std::ostringstream summary;
    summary << "method: " << agg.method << "\nconfig_hash: " << agg.config_hash << "\nseeds:";
    for (auto s : seeds) summary << " " << s;
    summary << "\nsucceeded: " << agg.runs.size() << "/" << seeds.size() << "\n";
    for (const auto& [name, m] : agg.metrics) {
        summary << "  " << name << ": mean " << fmt(m.mean) << " max " << fmt(m.max) << " std " << fmt(m.stddev)
                << "\n";
    }
    for (const auto& [s, msg] : agg.failures) summary << "failed seed " << s << ": " << msg << "\n";
    write_text_atomic(summary_path, summary.str());
    std::cout << summary.str();
    return agg.partial ? 3 : 0;
}

int cmd_fisher(const Common& c) {
    RunConfig config = load_config(c, c.positional);
    config.seed = resolve_seeds(c, config.seed).front();
    config.validate();
    Outputs outs(c.out, c.overwrite);
    const std::string path = outs.path("fisher.json");
    outs.claim();
    DataSplits data = make_dataset(config.data, config.seed);
    const ParamVector w0 = derive_pretrained(config);
    const FisherDiag f = empirical_fisher_diag(config.model, w0, data.train, config.fisher_samples);
    save_fisher(path, f);
    std::cout << "wrote " << path << " (" << f.scores.size() << " scores over " << f.dataset_size
              << " examples)\n";
    return 0;
}

int cmd_mask(const Common& c, const std::string& kind_name, double p, std::size_t k, const std::string& fisher_path) {
    RunConfig config = load_config(c, c.positional);
    config.seed = resolve_seeds(c, config.seed).front();
    config.model.validate();
    Outputs outs(c.out, c.overwrite);
    const std::string path = outs.path("mask.json");
    outs.claim();

    const ShapeRegistry registry = make_registry(config.model);
    const IndexSet head = config.mask_head ? IndexSet{} : registry.indices_of(config.model.head_param_names());
    const MaskKind kind = parse_mask_kind(kind_name);
    auto fisher_scores = [&] {
        if (fisher_path.empty()) throw ConfigError("--fisher is required for mask kind '" + kind_name + "'");
        FisherDiag f = load_fisher(fisher_path);
        if (f.scores.size() != registry.total_size()) {
            throw ConfigError("fisher file has " + std::to_string(f.scores.size()) + " scores, model has " +
                              std::to_string(registry.total_size()) + " parameters");
        }
        return f.scores;
    };
    Rng rng = Rng(config.seed).derive(12);
    GradMask mask;
    switch (kind) {
        case MaskKind::BernoulliF: mask = bernoulli_mask(registry.total_size(), head, p, rng); break;
        case MaskKind::FisherD: mask = fisher_topk_mask(fisher_scores(), head, p); break;
        case MaskKind::LowestD: mask = lowest_fisher_mask(fisher_scores(), head, p); break;
        case MaskKind::RandomD: mask = random_fixed_mask(registry.total_size(), head, p, rng); break;
        case MaskKind::TopkLayers: mask = topk_layer_mask(registry, k, head); break;
        case MaskKind::Custom: throw ConfigError("mask kind 'custom' cannot be built");
    }
    save_mask(path, mask);
    std::cout << "wrote " << path << " (" << mask.positive_count() << "/" << mask.size() << " positive)\n";
    return 0;
}

int cmd_overlap(const Common& c) {
    if (c.positional.size() < 2) throw ConfigError("overlap needs at least two mask files");
    Outputs outs(c.out, c.overwrite);
    const std::string path = outs.path("overlap.csv");
    outs.claim();
    const auto m = overlap_matrix_from_files(c.positional);
    std::vector<std::string> names;
    for (const auto& f : c.positional) names.push_back(fs::path(f).stem().string());
    const std::string csv = matrix_csv(m, names);
    write_text_atomic(path, csv);
    std::cout << csv;
    return 0;
}

int cmd_theory(const Common& c, std::size_t trials, std::size_t dim) {
    if (trials == 0 || dim == 0) throw ConfigError("--trials and --dim must be positive");
    Outputs outs(c.out, c.overwrite);
    const std::string t1 = outs.path("update_covariance.csv");
    const std::string t2 = outs.path("generalization_bound.csv");
    outs.claim();
    const std::uint64_t seed = resolve_seeds(c, 0).front();

    std::ostringstream csv;
    csv << "p,B,eta,predicted,empirical,rel_error\n";
    double worst = 0.0;
    std::uint64_t stream = 0;
    for (double eta : {0.1}) {
        for (double p : {0.2, 0.5, 1.0}) {
            for (std::size_t b : {1, 4, 16}) {
                NoiseModel noise;
                noise.grad_mean.assign(dim, 0.0);
                noise.sigma_g = 1.0;
                noise.batch_size = b;
                noise.p = p;
                noise.eta = eta;
                const Moments predicted = theorem1_covariance(noise);
                Rng rng = Rng(seed).derive(stream++);
                const Moments empirical = simulate_update_covariance(noise, trials, rng);
                double rel = 0.0, emp = 0.0;
                for (std::size_t i = 0; i < dim; ++i) {
                    const double r = std::abs(empirical.variance[i] - predicted.variance[i]) / predicted.variance[i];
                    if (r >= rel) {
                        rel = r;
                        emp = empirical.variance[i];
                    }
                }
                worst = std::max(worst, rel);
                csv << fmt(p) << "," << b << "," << fmt(eta) << "," << fmt(predicted.variance[0]) << "," << fmt(emp)
                    << "," << fmt(rel) << "\n";
            }
        }
    }
    write_text_atomic(t1, csv.str());
    std::cout << csv.str();

    std::ostringstream bounds;
    bounds << "sigma2,epsilon,delta,k,sigma0_2,sample_count,chi2_quantile,rho_max,remainder,bound\n";
    for (double sigma2 : {0.25, 0.5, 1.0, 2.0, 4.0}) {
        BoundInputs in;
        in.epsilon = 1.0;
        in.delta = 0.05;
        in.k = 10;
        in.sigma2 = sigma2;
        in.sigma0_2 = 1.0;
        in.w.assign(10, 0.1);
        in.w0.assign(10, 0.0);
        in.sample_count = 1000;
        bounds << fmt(sigma2) << "," << fmt(in.epsilon) << "," << fmt(in.delta) << "," << fmt(in.k) << ","
               << fmt(in.sigma0_2) << "," << in.sample_count << "," << fmt(chi2_quantile(in.k, 1.0 - in.delta)) << ","
               << fmt(escape_rho_bound(in)) << "," << fmt(bound_remainder(in)) << "," << fmt(generalization_bound(in))
               << "\n";
    }
    write_text_atomic(t2, bounds.str());
    std::cout << bounds.str();
    return worst < 0.05 ? 0 : 3;
}

int cmd_sharpness(const Common& c, const std::string& checkpoint, std::size_t iters) {
    RunConfig config = load_config(c, c.positional);
    config.seed = resolve_seeds(c, config.seed).front();
    if (checkpoint.empty()) throw ConfigError("--checkpoint is required");
    if (iters == 0) throw ConfigError("--iters must be positive");
    Outputs outs(c.out, c.overwrite);
    const std::string path = outs.path("sharpness.json");
    outs.claim();
    Checkpoint ck = load_checkpoint(checkpoint);
    DataSplits data = make_dataset(config.data, config.seed);
    data.train.validate(ck.spec.class_count());
    Rng rng = Rng(config.seed).derive(15);
    const double rho = sharpness_power_iteration(ck.spec, ck.params, data.train, iters, rng);
    write_json(path, Json{{"checkpoint", checkpoint}, {"iters", iters}, {"seed", config.seed}, {"sharpness", rho}});
    std::cout << "sharpness " << fmt(rho) << "\n";
    return 0;
}

int cmd_report(const Common& c, const std::vector<std::string>& metrics_arg) {
    if (c.positional.empty()) throw ConfigError("report needs at least one run file");
    Outputs outs(c.out, c.overwrite);
    const std::string path = outs.path("report.csv");
    outs.claim();
    std::map<std::pair<std::string, std::string>, std::vector<RunReport>> groups;
    std::vector<std::pair<std::string, std::string>> order;
    for (const auto& f : c.positional) {
        RunReport r = report_from_json(read_json(f));
        const auto key = std::make_pair(r.method, r.config_hash);
        if (!groups.count(key)) order.push_back(key);
        groups[key].push_back(std::move(r));
    }
    std::vector<Aggregate> rows;
    std::vector<std::string> metrics = metrics_arg;
    for (const auto& key : order) {
        rows.push_back(aggregate_reports(groups[key]));
        if (metrics_arg.empty()) {
            for (const auto& [m, _] : rows.back().metrics) {
                if (std::find(metrics.begin(), metrics.end(), m) == metrics.end()) metrics.push_back(m);
            }
        }
    }
    const std::string table = mean_max_table(rows, metrics);
    write_text_atomic(path, table);
    std::cout << table;
    return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"childgrad: child-network fine-tuning toolkit"};
    app.require_subcommand(1);
    Common common;

    auto add_common = [&](CLI::App* sub, bool config, bool seeds) {
        if (config) sub->add_option("--config", common.config_path, "run config (JSON)");
        if (seeds) sub->add_option("--seed", common.seeds, "seed or comma-separated seed list")->delimiter(',');
        sub->add_option("--out", common.out, "output directory");
        sub->add_flag("--overwrite", common.overwrite, "replace existing outputs");
    };

    auto* train = app.add_subcommand("train", "replicate a run over seeds and write reports");
    add_common(train, true, true);
    train->add_option("--jobs", common.jobs, "parallel runs")->check(CLI::PositiveNumber);
    train->add_option("overrides", common.positional, "dotted key=value overrides");

    auto* fisher = app.add_subcommand("fisher", "empirical Fisher diagonal at w_0 on the train split");
    add_common(fisher, true, true);
    fisher->add_option("overrides", common.positional, "dotted key=value overrides");

    std::string mask_kind = "fisher_d";
    double mask_p = 0.3;
    std::size_t mask_k = 1;
    std::string fisher_path;
    auto* mask = app.add_subcommand("mask", "build a gradient mask");
    add_common(mask, true, true);
    mask->add_option("--kind", mask_kind, "bernoulli_f, fisher_d, random_d, lowest_d or topk_layers");
    mask->add_option("--p", mask_p, "reserve probability or child ratio");
    mask->add_option("--k", mask_k, "layer count for topk_layers");
    mask->add_option("--fisher", fisher_path, "Fisher file for fisher_d and lowest_d");
    mask->add_option("overrides", common.positional, "dotted key=value overrides");

    auto* overlap = app.add_subcommand("overlap", "pairwise Jaccard overlap of mask files");
    add_common(overlap, false, false);
    overlap->add_option("masks", common.positional, "mask files")->required();

    std::size_t trials = 100000;
    std::size_t dim = 4;
    auto* theory = app.add_subcommand("theory", "update covariance grid and generalization bound table");
    add_common(theory, false, true);
    theory->add_option("--trials", trials, "Monte Carlo trials per grid point");
    theory->add_option("--dim", dim, "parameter dimension");

    std::string checkpoint;
    std::size_t iters = 50;
    auto* sharp = app.add_subcommand("sharpness", "largest Hessian eigenvalue of a checkpoint");
    add_common(sharp, true, true);
    sharp->add_option("--checkpoint", checkpoint, "checkpoint file");
    sharp->add_option("--iters", iters, "power iterations");
    sharp->add_option("overrides", common.positional, "dotted key=value overrides");

    std::vector<std::string> report_metrics;
    auto* report = app.add_subcommand("report", "mean (max) table over run files");
    add_common(report, false, false);
    report->add_option("--metric", report_metrics, "metrics to tabulate")->delimiter(',');
    report->add_option("runs", common.positional, "run report files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        if (rc != 0) std::cerr << app.help();
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*train) return cmd_train(common);
        if (*fisher) return cmd_fisher(common);
        if (*mask) return cmd_mask(common, mask_kind, mask_p, mask_k, fisher_path);
        if (*overlap) return cmd_overlap(common);
        if (*theory) return cmd_theory(common, trials, dim);
        if (*sharp) return cmd_sharpness(common, checkpoint, iters);
        if (*report) return cmd_report(common, report_metrics);
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    std::cerr << app.help();
    return 2;
}

}  // namespace childgrad
