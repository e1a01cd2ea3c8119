#include "childgrad/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "childgrad/error.hpp"
#include "childgrad/io.hpp"
#include "childgrad/random.hpp"

namespace childgrad {

namespace {

Dataset two_gaussians(const DataSpec& spec, Rng& rng) {
    if (spec.dim == 0) throw ConfigError("two_gaussians: dim must be positive");
    Dataset d;
    d.dim = spec.dim;
    const double along = spec.separation / 2.0 / std::sqrt(static_cast<double>(spec.dim));
    for (std::size_t i = 0; i < spec.n; ++i) {
        const int label = static_cast<int>(i % 2);
        const double sign = label == 1 ? 1.0 : -1.0;
        for (std::size_t j = 0; j < spec.dim; ++j) d.features.push_back(sign * along + rng.normal());
        d.targets.push_back(label);
    }
    return d;
}

Dataset two_moons(const DataSpec& spec, Rng& rng) {
    if (spec.dim < 2) throw ConfigError("two_moons: dim must be at least 2");
    Dataset d;
    d.dim = spec.dim;
    for (std::size_t i = 0; i < spec.n; ++i) {
        const int label = static_cast<int>(i % 2);
        const double t = rng.uniform() * std::numbers::pi;
        double x = std::cos(t);
        double y = std::sin(t);
        if (label == 1) {
            x = 1.0 - x;
            y = 0.5 - y;
        }
        d.features.push_back(x + spec.noise * rng.normal());
        d.features.push_back(y + spec.noise * rng.normal());
        for (std::size_t j = 2; j < spec.dim; ++j) d.features.push_back(spec.noise * rng.normal());
        d.targets.push_back(label);
    }
    return d;
}

Dataset linear_regression(const DataSpec& spec, Rng& rng) {
    if (spec.dim == 0) throw ConfigError("linear_regression: dim must be positive");
    Dataset d;
    d.dim = spec.dim;
    std::vector<double> w(spec.dim);
    for (double& v : w) v = rng.normal();
    for (std::size_t i = 0; i < spec.n; ++i) {
        double y = 0.0;
        for (std::size_t j = 0; j < spec.dim; ++j) {
            const double x = rng.normal();
            d.features.push_back(x);
            y += w[j] * x;
        }
        d.targets.push_back(y + spec.noise * rng.normal());
    }
    return d;
}

void translate(Dataset& d, double amount) {
    if (amount == 0.0) return;
    const double along = amount / std::sqrt(static_cast<double>(d.dim));
    for (double& v : d.features) v += along;
}

void rotate(Dataset& d, double radians) {
    if (radians == 0.0) return;
    if (d.dim < 2) throw ConfigError("rotation needs at least two features");
    const double c = std::cos(radians);
    const double s = std::sin(radians);
    for (std::size_t i = 0; i < d.size(); ++i) {
        double& x = d.features[i * d.dim];
        double& y = d.features[i * d.dim + 1];
        const double nx = c * x - s * y;
        const double ny = s * x + c * y;
        x = nx;
        y = ny;
    }
}

Dataset generate(const DataSpec& spec, Rng& rng) {
    if (spec.generator != "csv" && spec.n == 0) throw ConfigError("dataset size n must be positive");
    if (spec.generator == "two_gaussians") return two_gaussians(spec, rng);
    if (spec.generator == "two_moons") return two_moons(spec, rng);
    if (spec.generator == "linear_regression") return linear_regression(spec, rng);
    if (spec.generator == "csv") return load_csv(spec.path);
    throw ConfigError("unknown dataset generator '" + spec.generator + "'");
}

std::string shift_name(double shift) {
    std::ostringstream ss;
    ss << "shift" << shift;
    return ss.str();
}

}  // namespace

DataSplits make_dataset(const DataSpec& spec, std::uint64_t seed) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
        throw ConfigError("data.train_fraction must lie in (0, 1)");
    }
    Rng rng(spec.seed.value_or(seed));
    Rng gen_rng = rng.derive(1);
    Dataset all = generate(spec, gen_rng);
    rotate(all, spec.rotate);
    translate(all, spec.translate);
    all.validate(spec.is_regression() || spec.generator == "csv" ? 0 : std::numeric_limits<std::size_t>::max());
    if (all.size() < 2) throw ConfigError("dataset needs at least two examples to split");

    std::vector<std::size_t> order(all.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng split_rng = rng.derive(2);
    split_rng.shuffle(order);
    auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(all.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, all.size() - 1);

    DataSplits out;
    out.train = all.subset(std::span(order).first(n_train));
    out.eval = all.subset(std::span(order).subspan(n_train));

    if (!(spec.label_flip >= 0.0 && spec.label_flip <= 1.0)) throw ConfigError("data.label_flip must lie in [0, 1]");
    if (spec.label_flip > 0.0) {
        if (spec.is_regression()) throw ConfigError("data.label_flip needs class labels");
        const double top = *std::max_element(all.targets.begin(), all.targets.end());
        const auto classes = std::max<std::size_t>(2, static_cast<std::size_t>(top) + 1);
        Rng flip_rng = rng.derive(3);
        for (double& y : out.train.targets) {
            if (!flip_rng.bernoulli(spec.label_flip)) continue;
            const auto other = flip_rng.index(classes - 1);
            y = static_cast<double>(other >= static_cast<std::size_t>(y) ? other + 1 : other);
        }
    }

    for (std::size_t s = 0; s < spec.eval_shifts.size(); ++s) {
        Dataset shifted;
        if (spec.generator == "csv") {
            shifted = out.eval;
        } else {
            DataSpec eval_spec = spec;
            eval_spec.n = out.eval.size();
            Rng shift_rng = rng.derive(100 + s);
            shifted = generate(eval_spec, shift_rng);
            rotate(shifted, spec.rotate);
            translate(shifted, spec.translate);
        }
        translate(shifted, spec.eval_shifts[s]);
        shifted.domain.assign(shifted.size(), static_cast<int>(s + 1));
        out.shifted.emplace_back(shift_name(spec.eval_shifts[s]), std::move(shifted));
    }
    return out;
}

Dataset load_csv(const std::string& path) {
    const std::string text = read_text(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("CSV '" + path + "' is empty");
    const auto header_cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
    if (header_cols < 2) throw ConfigError("CSV '" + path + "' needs at least one feature and a label column");
    Dataset d;
    d.dim = header_cols - 1;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> cells;
        std::istringstream row(line);
        std::string cell;
        while (std::getline(row, cell, ',')) {
            try {
                std::size_t used = 0;
                cells.push_back(std::stod(cell, &used));
                if (cell.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw ConfigError("CSV '" + path + "' line " + std::to_string(line_no) + ": non-numeric cell '" +
                                  cell + "'");
            }
        }
        if (cells.size() != header_cols) {
            throw ConfigError("CSV '" + path + "' line " + std::to_string(line_no) + ": expected " +
                              std::to_string(header_cols) + " cells, got " + std::to_string(cells.size()));
        }
        d.features.insert(d.features.end(), cells.begin(), cells.end() - 1);
        d.targets.push_back(cells.back());
    }
    if (d.empty()) throw ConfigError("CSV '" + path + "' has no data rows");
    return d;
}

Dataset subsample(const Dataset& data, std::size_t n, std::uint64_t seed, std::size_t num_classes) {
    if (n == 0 || n > data.size()) {
        throw ConfigError("subsample size " + std::to_string(n) + " outside [1, " + std::to_string(data.size()) + "]");
    }
    Rng rng(seed);
    std::vector<std::size_t> chosen;
    if (num_classes == 0) {
        std::vector<std::size_t> all(data.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        rng.shuffle(all);
        chosen.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n));
    } else {
        std::vector<std::vector<std::size_t>> by_class(num_classes);
        for (std::size_t i = 0; i < data.size(); ++i) {
            by_class.at(static_cast<std::size_t>(data.targets[i])).push_back(i);
        }
        // Largest-remainder allocation of n across classes.
        std::vector<std::size_t> quota(num_classes);
        std::vector<std::pair<double, std::size_t>> remainders;
        std::size_t assigned = 0;
        for (std::size_t c = 0; c < num_classes; ++c) {
            const double exact = static_cast<double>(n) * static_cast<double>(by_class[c].size()) /
                                 static_cast<double>(data.size());
            quota[c] = static_cast<std::size_t>(std::floor(exact));
            assigned += quota[c];
            remainders.emplace_back(exact - std::floor(exact), c);
        }
        std::stable_sort(remainders.begin(), remainders.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t r = 0; assigned < n; ++r) {
            const std::size_t c = remainders[r % num_classes].second;
            if (quota[c] < by_class[c].size()) {
                ++quota[c];
                ++assigned;
            }
        }
        for (std::size_t c = 0; c < num_classes; ++c) {
            rng.shuffle(by_class[c]);
            chosen.insert(chosen.end(), by_class[c].begin(),
                          by_class[c].begin() + static_cast<std::ptrdiff_t>(quota[c]));
        }
    }
    std::sort(chosen.begin(), chosen.end());
    return data.subset(chosen);
}

}  // namespace childgrad
