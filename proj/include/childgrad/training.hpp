#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "childgrad/datasets.hpp"
#include "childgrad/masking.hpp"
#include "childgrad/model.hpp"
#include "childgrad/optim.hpp"

namespace childgrad {

enum class Method { Vanilla, ChildF, ChildD, RandomD, LowestD, PruneD, TopkLayers, WeightDecayW0 };

const char* method_name(Method method);
Method parse_method(const std::string& name);

struct MethodSpec {
    Method kind = Method::Vanilla;
    double p = 1.0;             // p_F for child_f, p_D for the fixed-mask variants
    std::size_t k_layers = 0;   // topk_layers
    double lambda = 0.0;        // weight_decay_w0

    std::string label() const;  // e.g. "child_d(0.3)"
    bool operator==(const MethodSpec&) const = default;
};

// Where w_0 comes from.
struct PretrainSpec {
    enum class Kind { Fresh, Checkpoint, Source };
    Kind kind = Kind::Fresh;
    std::string path;            // Checkpoint
    DataSpec source;             // Source: vanilla Adam training on this task
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    double eta = 1e-2;
    std::optional<std::uint64_t> seed;  // fixed pretraining seed; the run seed when unset
    bool reinit_head = false;    // replace the head with a fresh initialization after pretraining

    bool operator==(const PretrainSpec&) const = default;
};

struct RunConfig {
    ModelSpec model;
    DataSpec data;
    PretrainSpec pretrained;
    MethodSpec method;
    OptimConfig optim;  // total_steps and warmup_steps are derived per run
    std::size_t epochs = 10;
    std::size_t batch_size = 16;
    double warmup_ratio = 0.1;
    std::optional<std::size_t> subsample_n;
    std::optional<std::size_t> fisher_samples;
    bool mask_head = false;          // include the head in child selection
    std::size_t sharpness_iters = 0; // 0 disables the final sharpness estimate
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    std::map<std::string, double> metrics;  // "<eval set>.<metric>"
};

struct MaskSummary {
    std::string kind;
    double p = 1.0;
    std::size_t positive_count = 0;
    std::size_t param_count = 0;
    std::string positive_hash;  // FNV-1a over the positive index list
    std::string file;           // positive-index file, when written
};

struct RunReport {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string method;
    std::string schedule = "linear_warmup_linear_decay";
    std::size_t total_steps = 0;
    std::size_t warmup_steps = 0;
    std::optional<std::size_t> fisher_samples;
    std::vector<EpochRecord> epochs;
    std::map<std::string, double> final_metrics;
    std::optional<MaskSummary> mask;
    std::optional<double> sharpness;
    double wall_seconds = 0.0;  // excluded from the deterministic serialization
};

struct RunResult {
    RunReport report;
    ParamVector pretrained;  // w_0 as loaded or trained
    ParamVector start;       // starting point (w_0, pruned for prune_d)
    ParamVector final_params;
    AdamState state;
    std::optional<GradMask> fixed_mask;
};

struct TrainHooks {
    // Called with the mask used at every optimizer step.
    std::function<void(std::size_t step, const GradMask& mask)> on_step;
};

ParamVector derive_pretrained(const RunConfig& config);

RunResult train_run(const RunConfig& config, const TrainHooks& hooks = {});

// Freezes `frozen`, trains a fresh linear softmax head on the last hidden
// representation of probe.train with vanilla Adam and returns accuracy on
// probe.eval. Uses raw features when the model has no hidden layers.
double linear_probe(const ModelSpec& spec, const ParamVector& frozen, const DataSplits& probe,
                    std::size_t probe_epochs, std::uint64_t seed);

struct MetricSummary {
    double mean = 0.0;
    double max = 0.0;
    double stddev = 0.0;  // sample standard deviation, 0 for one value
    std::size_t count = 0;
};

MetricSummary summarize(std::span<const double> values);

struct Aggregate {
    std::string config_hash;
    std::string method;
    std::vector<std::uint64_t> seeds;
    std::map<std::string, MetricSummary> metrics;
    std::vector<RunReport> runs;  // in seed order
    std::vector<std::pair<std::uint64_t, std::string>> failures;
    bool partial = false;
};

Aggregate aggregate_reports(std::span<const RunReport> reports);

// Receives each successful run; calls are serialized.
using RunCallback = std::function<void(const RunResult& result)>;

// One train_run per seed, up to `jobs` at a time; per-metric mean, max and
// sample standard deviation over the successful runs.
Aggregate replicate_and_aggregate(const RunConfig& config, std::span<const std::uint64_t> seeds,
                                  std::size_t jobs = 1, const RunCallback& on_result = {});

std::vector<std::vector<double>> overlap_matrix_from_files(std::span<const std::string> mask_files);

}  // namespace childgrad
