#include "childgrad/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

namespace childgrad {

namespace {

constexpr std::size_t kPairwiseLeaf = 8;

double pairwise_sum_impl(const double* data, std::size_t n) {
    if (n <= kPairwiseLeaf) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            acc += data[i];
        }
        return acc;
    }
    const std::size_t half = n / 2;
    return pairwise_sum_impl(data, half) + pairwise_sum_impl(data + half, n - half);
}

}  // namespace

double pairwise_sum(std::span<const double> values) {
    return pairwise_sum_impl(values.data(), values.size());
}

double dot(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = std::min(a.size(), b.size());
    std::vector<double> terms(n);
    for (std::size_t i = 0; i < n; ++i) {
        terms[i] = a[i] * b[i];
    }
    return pairwise_sum(terms);
}

double l2_norm(std::span<const double> a) {
    return std::sqrt(dot(a, a));
}

bool all_finite(std::span<const double> values) {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t hash_doubles(std::span<const double> values) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (double v : values) {
        char buf[sizeof(double)];
        std::memcpy(buf, &v, sizeof(double));
        h = fnv1a(std::string_view(buf, sizeof(double)), h);
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

std::size_t ratio_count(double p, std::size_t n) {
    const double raw = p * static_cast<double>(n);
    auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
    return std::min(k, n);
}

}  // namespace childgrad
