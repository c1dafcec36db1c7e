#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "legalrag/error.hpp"
#include "legalrag/utf8.hpp"

namespace legalrag {

/// Dense embedding. When `normalized` is set the L2 norm is 1 within 1e-5.
struct EmbeddingVector {
  std::vector<float> values;
  bool normalized = false;

  std::size_t dim() const noexcept { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

inline constexpr double kNormTolerance = 1e-5;

inline double l2_norm(std::span<const float> v) {
  double sum = 0.0;
  for (float x : v) sum += static_cast<double>(x) * x;
  return std::sqrt(sum);
}

/// Dot product accumulated in double, in index order.
inline double dot(std::span<const float> a, std::span<const float> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += static_cast<double>(a[i]) * b[i];
  return sum;
}

inline bool is_unit(std::span<const float> v) {
  return std::abs(l2_norm(v) - 1.0) <= kNormTolerance;
}

inline bool all_finite(std::span<const float> v) {
  for (float x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

/// Normalizes raw components to unit length. Rejects non-finite or zero input.
inline EmbeddingVector normalize(std::span<const double> raw) {
  double sum = 0.0;
  for (double x : raw) {
    if (!std::isfinite(x)) throw ContractError("embedding has non-finite component");
    sum += x * x;
  }
  const double norm = std::sqrt(sum);
  if (!(norm > 0.0)) throw ContractError("cannot normalize a zero vector");
  EmbeddingVector v;
  v.values.reserve(raw.size());
  for (double x : raw) v.values.push_back(static_cast<float>(x / norm));
  v.normalized = true;
  return v;
}

inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) throw ContractError("dimension mismatch");
  const double na = l2_norm(a.values), nb = l2_norm(b.values);
  return dot(a.values, b.values) / (na * nb);
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class SplitMix64 {
public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [-1, 1) from the top 53 bits.
  double next_signed_unit() {
    const double u = static_cast<double>(next() >> 11) * 0x1.0p-53;
    return 2.0 * u - 1.0;
  }

private:
  std::uint64_t state_;
};

/// Offline embedder: FNV-1a token hash seeds splitmix64, token vectors are
/// mean-pooled and L2-normalized. A pure function of (text, dim).
inline EmbeddingVector deterministic_embed(std::string_view text, std::size_t dim) {
  if (dim < 2) throw ContractError("deterministic_embed requires dim >= 2");
  auto tokens = utf8::split_whitespace(text);
  if (tokens.empty()) tokens.emplace_back();

  std::vector<double> pooled(dim, 0.0);
  for (const auto& tok : tokens) {
    SplitMix64 rng(fnv1a64(tok));
    for (std::size_t i = 0; i < dim; ++i) pooled[i] += rng.next_signed_unit();
  }
  const double n = static_cast<double>(tokens.size());
  for (double& x : pooled) x /= n;

  double sum = 0.0;
  for (double x : pooled) sum += x * x;
  if (!(sum > 0.0)) return deterministic_embed("", dim);
  return normalize(pooled);
}

} // namespace legalrag
