#include "childgrad/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "childgrad/error.hpp"
#include "childgrad/numeric.hpp"

namespace childgrad {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

namespace {

void check_shape(const Shape& shape) {
    if (shape.empty()) {
        throw ShapeError("tensor shape must have at least one dimension");
    }
    for (auto d : shape) {
        if (d == 0) {
            throw ShapeError("tensor dimension must be positive, got " + shape_string(shape));
        }
    }
}

}  // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_size(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (shape_size(shape_) != data_.size()) {
        throw ShapeError("tensor shape " + shape_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
    }
    if (!all_finite(data_)) {
        throw NumericError("tensor constructed with non-finite entries");
    }
}

const ParamEntry& ShapeRegistry::add(std::string name, Shape shape, int layer) {
    check_shape(shape);
    if (find(name)) {
        throw ShapeError("duplicate parameter name '" + name + "'");
    }
    ParamEntry e;
    e.name = std::move(name);
    e.size = shape_size(shape);
    e.shape = std::move(shape);
    e.offset = total_;
    e.layer = layer;
    total_ += e.size;
    entries_.push_back(std::move(e));
    return entries_.back();
}

const ParamEntry* ShapeRegistry::find(std::string_view name) const {
    auto it = std::find_if(entries_.begin(), entries_.end(), [&](const ParamEntry& e) { return e.name == name; });
    return it == entries_.end() ? nullptr : &*it;
}

const ParamEntry& ShapeRegistry::at(std::string_view name) const {
    if (const auto* e = find(name)) {
        return *e;
    }
    throw ShapeError("unknown parameter '" + std::string(name) + "'");
}

int ShapeRegistry::max_layer() const {
    int m = -1;
    for (const auto& e : entries_) m = std::max(m, e.layer);
    return m;
}

std::vector<std::size_t> ShapeRegistry::indices_of(std::span<const std::string> names) const {
    std::vector<std::size_t> out;
    for (const auto& name : names) {
        const auto& e = at(name);
        for (std::size_t i = 0; i < e.size; ++i) out.push_back(e.offset + i);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

ParamVector::ParamVector(ShapeRegistry registry) : registry_(std::move(registry)) {
    values_.assign(registry_.total_size(), 0.0);
}

ParamVector::ParamVector(ShapeRegistry registry, std::vector<double> values)
    : registry_(std::move(registry)), values_(std::move(values)) {
    if (values_.size() != registry_.total_size()) {
        throw ShapeError("parameter vector has " + std::to_string(values_.size()) + " values, registry expects " +
                         std::to_string(registry_.total_size()));
    }
}

std::span<double> ParamVector::view(std::string_view name) {
    const auto& e = registry_.at(name);
    return std::span<double>(values_).subspan(e.offset, e.size);
}

std::span<const double> ParamVector::view(std::string_view name) const {
    const auto& e = registry_.at(name);
    return std::span<const double>(values_).subspan(e.offset, e.size);
}

Tensor ParamVector::tensor(std::string_view name) const {
    const auto& e = registry_.at(name);
    auto v = view(name);
    return Tensor(e.shape, std::vector<double>(v.begin(), v.end()));
}

}  // namespace childgrad
