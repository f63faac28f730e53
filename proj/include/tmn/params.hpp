#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tmn/numeric.hpp"

namespace tmn {

struct NamedParam {
  std::string name;
  Matrix* matrix;
};

using ParamList = std::vector<NamedParam>;

using Rng = std::mt19937_64;

/// uniform(−s, s) with s = sqrt(6 / (fan_in + fan_out)).
inline void scaled_uniform(Matrix& m, Rng& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  std::uniform_real_distribution<double> dist(-s, s);
  for (double& v : m.values()) v = dist(rng);
}

inline void uniform_fill(Matrix& m, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : m.values()) v = dist(rng);
}

inline std::size_t count_parameters(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.matrix->size();
  return n;
}

/// Flattens every parameter into one vector, in list order.
inline Vector flatten(const ParamList& params) {
  Vector out;
  out.reserve(count_parameters(params));
  for (const auto& p : params) out.insert(out.end(), p.matrix->values().begin(), p.matrix->values().end());
  return out;
}

inline void unflatten(const ParamList& params, std::span<const double> flat) {
  if (flat.size() != count_parameters(params)) throw ShapeError("unflatten: size mismatch");
  std::size_t at = 0;
  for (const auto& p : params) {
    auto dst = p.matrix->values();
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(at),
              flat.begin() + static_cast<std::ptrdiff_t>(at + dst.size()), dst.begin());
    at += dst.size();
  }
}

}  // namespace tmn
