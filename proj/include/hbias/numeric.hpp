#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace hbias {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

// log Σ exp(v_i); -inf for an empty input or when every entry is -inf.
inline double logsumexp(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// v - <v, u> u for unit u.
inline std::vector<double> tangent_projection(std::span<const double> v, std::span<const double> u) {
  const double c = dot(v, u);
  std::vector<double> out(v.begin(), v.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= c * u[i];
  return out;
}

// 17 significant digits: doubles round-trip exactly through text.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double_field(const std::string& field);

}  // namespace hbias
