#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace childgrad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major tensor of 64-bit floats. Construction checks that the shape
// matches the data length and that every entry is finite.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);  // zero-filled
    Tensor(Shape shape, std::vector<double> data);

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

struct ParamEntry {
    std::string name;
    Shape shape;
    std::size_t offset = 0;
    std::size_t size = 0;
    // Layer index counted from the input; the task head is the last layer.
    int layer = 0;

    bool operator==(const ParamEntry&) const = default;
};

// Maps named tensors onto contiguous ranges of a flat parameter vector.
class ShapeRegistry {
public:
    const ParamEntry& add(std::string name, Shape shape, int layer);

    const ParamEntry* find(std::string_view name) const;
    const ParamEntry& at(std::string_view name) const;

    const std::vector<ParamEntry>& entries() const { return entries_; }
    std::size_t total_size() const { return total_; }
    int max_layer() const;

    // Sorted flat indices covered by the named entries.
    std::vector<std::size_t> indices_of(std::span<const std::string> names) const;

    bool operator==(const ShapeRegistry&) const = default;

private:
    std::vector<ParamEntry> entries_;
    std::size_t total_ = 0;
};

// Flat parameter store. Houses both the live weights and the pretrained copy.
class ParamVector {
public:
    ParamVector() = default;
    explicit ParamVector(ShapeRegistry registry);
    ParamVector(ShapeRegistry registry, std::vector<double> values);

    const ShapeRegistry& registry() const { return registry_; }
    std::size_t size() const { return values_.size(); }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    std::vector<double>& raw() { return values_; }
    const std::vector<double>& raw() const { return values_; }

    std::span<double> view(std::string_view name);
    std::span<const double> view(std::string_view name) const;
    Tensor tensor(std::string_view name) const;

    bool operator==(const ParamVector&) const = default;

private:
    ShapeRegistry registry_;
    std::vector<double> values_;
};

}  // namespace childgrad
