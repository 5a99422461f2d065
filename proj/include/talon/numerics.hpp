#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace talon {

/// Overflow-safe log(1 + exp(x)).
double softplus(double x);

/// Probability vector over the finite entries; -inf entries map to exactly 0.
/// Throws if every entry is -inf.
std::vector<double> softmax(const std::vector<double>& v);

double sigmoid(double x);

/// Standard normal CDF.
double normal_cdf(double x);

double mean(const std::vector<double>& v);

/// Population (1/n) variance; the single convention used project-wide.
double variance(const std::vector<double>& v);

double stddev(const std::vector<double>& v);

/// Pearson correlation with a variance guard: below 1e-12 returns 0.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

/// Hex digest of the SHA-256 hash of a byte string.
std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& s);

}  // namespace talon
