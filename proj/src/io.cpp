#include "childgrad/io.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "childgrad/error.hpp"
#include "childgrad/fisher.hpp"
#include "childgrad/masking.hpp"
#include "childgrad/optim.hpp"

namespace childgrad {

namespace fs = std::filesystem;

void write_text_atomic(const std::string& path, const std::string& content) {
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write '" + tmp.string() + "'");
        out << content;
        if (!out) throw ConfigError("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, target);
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Json read_json(const std::string& path) {
    try {
        return Json::parse(read_text(path));
    } catch (const Json::parse_error& e) {
        throw ConfigError("malformed JSON in '" + path + "': " + e.what());
    }
}

void write_json(const std::string& path, const Json& value) {
    write_text_atomic(path, value.dump(2) + "\n");
}

void expect_format(const Json& doc, const std::string& format, int version, const std::string& path) {
    if (!doc.is_object() || doc.value("format", "") != format) {
        throw ConfigError("'" + path + "' is not a " + format + " file");
    }
    if (doc.value("version", -1) != version) {
        throw ConfigError("'" + path + "': unsupported " + format + " version " + doc.value("version", Json()).dump());
    }
}

Json spec_to_json(const ModelSpec& spec) {
    return Json{{"input_dim", spec.input_dim},
                {"hidden_dims", spec.hidden_dims},
                {"output", output_name(spec.output)},
                {"num_classes", spec.num_classes},
                {"activation", activation_name(spec.activation)},
                {"bias", spec.bias}};
}

ModelSpec spec_from_json(const Json& j) {
    if (!j.is_object()) throw ConfigError("model spec must be an object");
    for (const auto& [key, _] : j.items()) {
        static const char* known[] = {"input_dim", "hidden_dims", "output", "num_classes", "activation", "bias"};
        if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
            throw ConfigError("unknown key 'model." + key + "'");
        }
    }
    try {
        ModelSpec s;
        s.input_dim = j.at("input_dim").get<std::size_t>();
        s.hidden_dims = j.value("hidden_dims", std::vector<std::size_t>{});
        s.output = parse_output(j.value("output", std::string("classifier")));
        s.num_classes = j.value("num_classes", std::size_t{2});
        s.activation = parse_activation(j.value("activation", std::string("tanh")));
        s.bias = j.value("bias", true);
        s.validate();
        return s;
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("model spec: ") + e.what());
    }
}

Json params_to_json(const ParamVector& params) {
    Json tensors = Json::array();
    for (const auto& e : params.registry().entries()) {
        auto v = params.view(e.name);
        tensors.push_back({{"name", e.name}, {"shape", e.shape}, {"values", std::vector<double>(v.begin(), v.end())}});
    }
    return tensors;
}

ParamVector params_from_json(const Json& j, const ModelSpec& spec) {
    ParamVector params(make_registry(spec));
    if (!j.is_array() || j.size() != params.registry().entries().size()) {
        throw ConfigError("checkpoint tensors do not match the model spec");
    }
    for (const auto& t : j) {
        const auto name = t.at("name").get<std::string>();
        const auto& e = params.registry().at(name);
        if (t.at("shape").get<Shape>() != e.shape) {
            throw ShapeError("checkpoint tensor '" + name + "' has the wrong shape");
        }
        const auto values = t.at("values").get<std::vector<double>>();
        if (values.size() != e.size) throw ShapeError("checkpoint tensor '" + name + "' has the wrong size");
        std::copy(values.begin(), values.end(), params.view(name).begin());
    }
    return params;
}

void save_checkpoint(const std::string& path, const ModelSpec& spec, const ParamVector& params) {
    write_json(path, Json{{"format", "childgrad.checkpoint"},
                          {"version", 1},
                          {"spec", spec_to_json(spec)},
                          {"tensors", params_to_json(params)}});
}

Checkpoint load_checkpoint(const std::string& path) {
    const Json doc = read_json(path);
    expect_format(doc, "childgrad.checkpoint", 1, path);
    try {
        ModelSpec spec = spec_from_json(doc.at("spec"));
        ParamVector params = params_from_json(doc.at("tensors"), spec);
        return {std::move(spec), std::move(params)};
    } catch (const Json::exception& e) {
        throw ConfigError("checkpoint '" + path + "': " + e.what());
    }
}

void save_mask(const std::string& path, const GradMask& mask) {
    Json doc{{"format", "childgrad.mask"},
             {"version", 1},
             {"kind", mask_kind_name(mask.kind())},
             {"p", mask.p()},
             {"param_count", mask.size()},
             {"positive", mask.positive_indices()}};
    // Scales are stored only when some child entry differs from 1.
    bool unit = true;
    for (double s : mask.scales()) unit = unit && (s == 0.0 || s == 1.0);
    if (!unit) {
        std::vector<double> scales;
        for (auto i : mask.positive_indices()) scales.push_back(mask.scales()[i]);
        doc["scales"] = scales;
    }
    write_json(path, doc);
}

GradMask load_mask(const std::string& path) {
    const Json doc = read_json(path);
    expect_format(doc, "childgrad.mask", 1, path);
    try {
        const auto n = doc.at("param_count").get<std::size_t>();
        const auto positive = doc.at("positive").get<std::vector<std::size_t>>();
        std::vector<double> scales(n, 0.0);
        std::vector<double> values(positive.size(), 1.0);
        if (doc.contains("scales")) values = doc.at("scales").get<std::vector<double>>();
        if (values.size() != positive.size()) throw ConfigError("mask '" + path + "': scales/positive mismatch");
        for (std::size_t i = 0; i < positive.size(); ++i) {
            if (positive[i] >= n) throw ConfigError("mask '" + path + "': index out of range");
            scales[positive[i]] = values[i];
        }
        return GradMask(std::move(scales), parse_mask_kind(doc.at("kind").get<std::string>()),
                        doc.at("p").get<double>());
    } catch (const Json::exception& e) {
        throw ConfigError("mask '" + path + "': " + e.what());
    }
}

void save_fisher(const std::string& path, const FisherDiag& fisher) {
    write_json(path, Json{{"format", "childgrad.fisher"},
                          {"version", 1},
                          {"params_hash", fisher.params_hash},
                          {"dataset_size", fisher.dataset_size},
                          {"scores", fisher.scores}});
}

FisherDiag load_fisher(const std::string& path) {
    const Json doc = read_json(path);
    expect_format(doc, "childgrad.fisher", 1, path);
    try {
        FisherDiag f;
        f.params_hash = doc.at("params_hash").get<std::string>();
        f.dataset_size = doc.at("dataset_size").get<std::size_t>();
        f.scores = doc.at("scores").get<std::vector<double>>();
        return f;
    } catch (const Json::exception& e) {
        throw ConfigError("fisher '" + path + "': " + e.what());
    }
}

void save_adam_state(const std::string& path, const AdamState& state) {
    write_json(path, Json{{"format", "childgrad.adam_state"}, {"version", 1}, {"t", state.t}, {"m", state.m}, {"v", state.v}});
}

AdamState load_adam_state(const std::string& path) {
    const Json doc = read_json(path);
    expect_format(doc, "childgrad.adam_state", 1, path);
    try {
        AdamState s;
        s.t = doc.at("t").get<std::uint64_t>();
        s.m = doc.at("m").get<std::vector<double>>();
        s.v = doc.at("v").get<std::vector<double>>();
        if (s.m.size() != s.v.size()) throw ConfigError("adam state '" + path + "': m and v differ in length");
        return s;
    } catch (const Json::exception& e) {
        throw ConfigError("adam state '" + path + "': " + e.what());
    }
}

}  // namespace childgrad
