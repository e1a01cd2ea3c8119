#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace childgrad {

// Pairwise (tree) summation in ascending index order. The reduction tree depends
// only on the length, so results are reproducible across platforms.
double pairwise_sum(std::span<const double> values);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);

bool all_finite(std::span<const double> values);

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t hash_doubles(std::span<const double> values);
std::string hex64(std::uint64_t value);

// Number of entries selected by a ratio p out of n: ceil(p*n), robust against
// representation error such as 0.3*10 = 3.0000000000000004.
std::size_t ratio_count(double p, std::size_t n);

}  // namespace childgrad
