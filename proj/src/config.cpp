#include "childgrad/config.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "childgrad/error.hpp"
#include "childgrad/numeric.hpp"

namespace childgrad {

namespace {

void check_keys(const Json& j, const std::string& section, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError("'" + section + "' must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items()) {
        if (!ok.count(key)) throw ConfigError("unknown key '" + (section.empty() ? key : section + "." + key) + "'");
    }
}

template <typename T>
void read(const Json& j, const char* key, T& out, const std::string& section) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("bad value for '" + section + "." + key + "': " + j.at(key).dump());
    }
}

template <typename T>
void read_opt(const Json& j, const char* key, std::optional<T>& out, const std::string& section) {
    if (!j.contains(key) || j.at(key).is_null()) return;
    T v{};
    read(j, key, v, section);
    out = v;
}

// Counts given as JSON numbers must be nonnegative integers.
void read_count(const Json& j, const char* key, std::size_t& out, const std::string& section) {
    if (!j.contains(key)) return;
    const Json& v = j.at(key);
    if (!v.is_number_unsigned()) throw ConfigError("'" + section + "." + key + "' must be a nonnegative integer");
    out = v.get<std::size_t>();
}

void read_count_opt(const Json& j, const char* key, std::optional<std::size_t>& out, const std::string& section) {
    if (!j.contains(key) || j.at(key).is_null()) return;
    std::size_t v = 0;
    read_count(j, key, v, section);
    out = v;
}

DataSpec data_from_json(const Json& j, const std::string& section) {
    check_keys(j, section,
               {"generator", "n", "dim", "separation", "noise", "path", "train_fraction", "translate", "rotate",
                "eval_shifts", "label_flip", "seed"});
    DataSpec d;
    read(j, "generator", d.generator, section);
    read_count(j, "n", d.n, section);
    read_count(j, "dim", d.dim, section);
    read(j, "separation", d.separation, section);
    read(j, "noise", d.noise, section);
    read(j, "path", d.path, section);
    read(j, "train_fraction", d.train_fraction, section);
    read(j, "translate", d.translate, section);
    read(j, "rotate", d.rotate, section);
    read(j, "eval_shifts", d.eval_shifts, section);
    read(j, "label_flip", d.label_flip, section);
    read_opt(j, "seed", d.seed, section);
    return d;
}

Json data_to_json(const DataSpec& d) {
    Json j = {{"generator", d.generator}, {"n", d.n},           {"dim", d.dim},
              {"separation", d.separation}, {"noise", d.noise}, {"path", d.path},
              {"train_fraction", d.train_fraction}, {"translate", d.translate}, {"rotate", d.rotate},
              {"eval_shifts", d.eval_shifts}, {"label_flip", d.label_flip}};
    j["seed"] = d.seed ? Json(*d.seed) : Json(nullptr);
    return j;
}

const char* pretrain_kind_name(PretrainSpec::Kind k) {
    switch (k) {
        case PretrainSpec::Kind::Fresh: return "fresh";
        case PretrainSpec::Kind::Checkpoint: return "checkpoint";
        case PretrainSpec::Kind::Source: return "source";
    }
    return "fresh";
}

}  // namespace

RunConfig run_config_from_json(const Json& j) {
    check_keys(j, "", {"model", "data", "pretrained", "method", "optim", "training", "seed"});
    RunConfig c;
    if (j.contains("model")) c.model = spec_from_json(j.at("model"));
    if (j.contains("data")) c.data = data_from_json(j.at("data"), "data");
    if (j.contains("pretrained")) {
        const Json& p = j.at("pretrained");
        check_keys(p, "pretrained", {"kind", "path", "source", "epochs", "batch_size", "eta", "seed", "reinit_head"});
        std::string kind = "fresh";
        read(p, "kind", kind, "pretrained");
        if (kind == "fresh") {
            c.pretrained.kind = PretrainSpec::Kind::Fresh;
        } else if (kind == "checkpoint") {
            c.pretrained.kind = PretrainSpec::Kind::Checkpoint;
        } else if (kind == "source") {
            c.pretrained.kind = PretrainSpec::Kind::Source;
        } else {
            throw ConfigError("unknown pretrained.kind '" + kind + "'");
        }
        read(p, "path", c.pretrained.path, "pretrained");
        if (p.contains("source")) c.pretrained.source = data_from_json(p.at("source"), "pretrained.source");
        read_count(p, "epochs", c.pretrained.epochs, "pretrained");
        read_count(p, "batch_size", c.pretrained.batch_size, "pretrained");
        read(p, "eta", c.pretrained.eta, "pretrained");
        read_opt(p, "seed", c.pretrained.seed, "pretrained");
        read(p, "reinit_head", c.pretrained.reinit_head, "pretrained");
        if (c.pretrained.kind == PretrainSpec::Kind::Checkpoint && c.pretrained.path.empty()) {
            throw ConfigError("pretrained.path is required for kind 'checkpoint'");
        }
    }
    if (j.contains("method")) {
        const Json& m = j.at("method");
        check_keys(m, "method", {"name", "p", "k_layers", "lambda"});
        std::string name = "vanilla";
        read(m, "name", name, "method");
        c.method.kind = parse_method(name);
        read(m, "p", c.method.p, "method");
        read_count(m, "k_layers", c.method.k_layers, "method");
        read(m, "lambda", c.method.lambda, "method");
    }
    if (j.contains("optim")) {
        const Json& o = j.at("optim");
        check_keys(o, "optim", {"eta", "beta1", "beta2", "eps", "weight_decay", "clip_max_norm"});
        read(o, "eta", c.optim.eta, "optim");
        read(o, "beta1", c.optim.beta1, "optim");
        read(o, "beta2", c.optim.beta2, "optim");
        read(o, "eps", c.optim.eps, "optim");
        read(o, "weight_decay", c.optim.weight_decay, "optim");
        read(o, "clip_max_norm", c.optim.clip_max_norm, "optim");
    }
    if (j.contains("training")) {
        const Json& t = j.at("training");
        check_keys(t, "training",
                   {"epochs", "batch_size", "warmup_ratio", "subsample_n", "fisher_samples", "mask_head",
                    "sharpness_iters"});
        read_count(t, "epochs", c.epochs, "training");
        read_count(t, "batch_size", c.batch_size, "training");
        read(t, "warmup_ratio", c.warmup_ratio, "training");
        read_count_opt(t, "subsample_n", c.subsample_n, "training");
        read_count_opt(t, "fisher_samples", c.fisher_samples, "training");
        read(t, "mask_head", c.mask_head, "training");
        read_count(t, "sharpness_iters", c.sharpness_iters, "training");
    }
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned()) throw ConfigError("'seed' must be a nonnegative integer");
        c.seed = j.at("seed").get<std::uint64_t>();
    }
    return c;
}

Json run_config_to_json(const RunConfig& c) {
    Json j;
    j["model"] = spec_to_json(c.model);
    j["data"] = data_to_json(c.data);
    Json p = {{"kind", pretrain_kind_name(c.pretrained.kind)},
              {"path", c.pretrained.path},
              {"source", data_to_json(c.pretrained.source)},
              {"epochs", c.pretrained.epochs},
              {"batch_size", c.pretrained.batch_size},
              {"eta", c.pretrained.eta},
              {"reinit_head", c.pretrained.reinit_head}};
    p["seed"] = c.pretrained.seed ? Json(*c.pretrained.seed) : Json(nullptr);
    j["pretrained"] = p;
    j["method"] = {{"name", method_name(c.method.kind)},
                   {"p", c.method.p},
                   {"k_layers", c.method.k_layers},
                   {"lambda", c.method.lambda}};
    j["optim"] = {{"eta", c.optim.eta},       {"beta1", c.optim.beta1},
                  {"beta2", c.optim.beta2},   {"eps", c.optim.eps},
                  {"weight_decay", c.optim.weight_decay}, {"clip_max_norm", c.optim.clip_max_norm}};
    Json t = {{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"warmup_ratio", c.warmup_ratio},
              {"mask_head", c.mask_head},
              {"sharpness_iters", c.sharpness_iters}};
    t["subsample_n"] = c.subsample_n ? Json(*c.subsample_n) : Json(nullptr);
    t["fisher_samples"] = c.fisher_samples ? Json(*c.fisher_samples) : Json(nullptr);
    j["training"] = t;
    j["seed"] = c.seed;
    return j;
}

void apply_overrides(Json& doc, const std::vector<std::string>& overrides) {
    for (const auto& item : overrides) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + item + "' is not key=value");
        const std::string key = item.substr(0, eq);
        const std::string raw = item.substr(eq + 1);
        Json value = Json::parse(raw, nullptr, false);
        if (value.is_discarded()) value = raw;
        Json* node = &doc;
        std::stringstream parts(key);
        std::string part;
        std::vector<std::string> path;
        while (std::getline(parts, part, '.')) {
            if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
            path.push_back(part);
        }
        for (std::size_t i = 0; i + 1 < path.size(); ++i) {
            if (!node->is_object()) throw ConfigError("override key '" + key + "' descends into a non-object");
            node = &(*node)[path[i]];
            if (node->is_null()) *node = Json::object();
        }
        if (!node->is_object()) throw ConfigError("override key '" + key + "' descends into a non-object");
        (*node)[path.back()] = value;
    }
}

std::string config_hash(const RunConfig& config) {
    Json j = run_config_to_json(config);
    j.erase("seed");
    return hex64(fnv1a(j.dump()));
}

Json report_to_json(const RunReport& r, bool include_timing) {
    Json j;
    j["format"] = "childgrad.report";
    j["version"] = 1;
    j["config_hash"] = r.config_hash;
    j["seed"] = r.seed;
    j["method"] = r.method;
    j["schedule"] = r.schedule;
    j["total_steps"] = r.total_steps;
    j["warmup_steps"] = r.warmup_steps;
    j["fisher_samples"] = r.fisher_samples ? Json(*r.fisher_samples) : Json(nullptr);
    Json epochs = Json::array();
    for (const auto& e : r.epochs) {
        epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"metrics", e.metrics}});
    }
    j["epochs"] = epochs;
    j["final_metrics"] = r.final_metrics;
    if (r.mask) {
        j["mask"] = {{"kind", r.mask->kind},
                     {"p", r.mask->p},
                     {"positive_count", r.mask->positive_count},
                     {"param_count", r.mask->param_count},
                     {"positive_hash", r.mask->positive_hash},
                     {"file", r.mask->file}};
    } else {
        j["mask"] = nullptr;
    }
    j["sharpness"] = r.sharpness ? Json(*r.sharpness) : Json(nullptr);
    if (include_timing) j["wall_seconds"] = r.wall_seconds;
    return j;
}

RunReport report_from_json(const Json& j) {
    expect_format(j, "childgrad.report", 1, "report");
    RunReport r;
    try {
        r.config_hash = j.at("config_hash").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.method = j.at("method").get<std::string>();
        r.schedule = j.value("schedule", r.schedule);
        r.total_steps = j.at("total_steps").get<std::size_t>();
        r.warmup_steps = j.at("warmup_steps").get<std::size_t>();
        if (j.contains("fisher_samples") && !j["fisher_samples"].is_null()) {
            r.fisher_samples = j["fisher_samples"].get<std::size_t>();
        }
        for (const auto& e : j.at("epochs")) {
            EpochRecord rec;
            rec.epoch = e.at("epoch").get<std::size_t>();
            rec.train_loss = e.at("train_loss").get<double>();
            rec.metrics = e.at("metrics").get<std::map<std::string, double>>();
            r.epochs.push_back(std::move(rec));
        }
        r.final_metrics = j.at("final_metrics").get<std::map<std::string, double>>();
        if (j.contains("mask") && !j["mask"].is_null()) {
            const Json& m = j["mask"];
            MaskSummary ms;
            ms.kind = m.at("kind").get<std::string>();
            ms.p = m.at("p").get<double>();
            ms.positive_count = m.at("positive_count").get<std::size_t>();
            ms.param_count = m.at("param_count").get<std::size_t>();
            ms.positive_hash = m.value("positive_hash", "");
            ms.file = m.value("file", "");
            r.mask = ms;
        }
        if (j.contains("sharpness") && !j["sharpness"].is_null()) r.sharpness = j["sharpness"].get<double>();
        r.wall_seconds = j.value("wall_seconds", 0.0);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed report: ") + e.what());
    }
    return r;
}

Json aggregate_to_json(const Aggregate& agg) {
    Json j;
    j["format"] = "childgrad.aggregate";
    j["version"] = 1;
    j["config_hash"] = agg.config_hash;
    j["method"] = agg.method;
    j["seeds"] = agg.seeds;
    Json metrics = Json::object();
    for (const auto& [name, s] : agg.metrics) {
        metrics[name] = {{"mean", s.mean}, {"max", s.max}, {"std", s.stddev}, {"count", s.count}};
    }
    j["metrics"] = metrics;
    Json failures = Json::array();
    for (const auto& [seed, msg] : agg.failures) failures.push_back({{"seed", seed}, {"error", msg}});
    j["failures"] = failures;
    j["partial"] = agg.partial;
    return j;
}

std::string aggregate_csv(const Aggregate& agg) {
    std::ostringstream out;
    out << "metric,mean,max,std,count\n";
    char buf[160];
    for (const auto& [name, s] : agg.metrics) {
        std::snprintf(buf, sizeof(buf), "%s,%.10g,%.10g,%.10g,%zu\n", name.c_str(), s.mean, s.max, s.stddev, s.count);
        out << buf;
    }
    return out.str();
}

std::string mean_max_table(const std::vector<Aggregate>& rows, const std::vector<std::string>& metrics) {
    std::ostringstream out;
    out << "method";
    for (const auto& m : metrics) out << "," << m;
    out << "\n";
    char buf[96];
    for (const auto& row : rows) {
        out << row.method;
        for (const auto& m : metrics) {
            auto it = row.metrics.find(m);
            if (it == row.metrics.end()) {
                out << ",";
                continue;
            }
            std::snprintf(buf, sizeof(buf), ",%.4f (%.4f)", it->second.mean, it->second.max);
            out << buf;
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace childgrad
