#pragma once

// Reference computations that share no code with the library: a hard-margin
// QP solved by enumerating KKT support sets, a grid search for the min-norm
// point of a small convex hull, and a few small dense helpers.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

// Gaussian elimination with partial pivoting; nullopt when singular.
inline std::optional<Vec> solve(Mat a, Vec b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    if (std::abs(a[piv][c]) < 1e-13) return std::nullopt;
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  Vec x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
    x[i] = s / a[i][i];
  }
  return x;
}

struct MaxMargin {
  Vec w;           // minimum-norm w with z_i . w >= 1
  Vec direction;   // w / |w|
  double margin;   // 1 / |w|
};

// min |w|^2 s.t. <w, z_i> >= 1. For every support set S with |S| <= dim,
// w = sum_{S} a_i z_i with <w, z_j> = 1 on S; keep feasible candidates with
// a >= 0 and return the one of least norm. nullopt if none is feasible.
inline std::optional<MaxMargin> max_margin_qp(const std::vector<Vec>& z) {
  const std::size_t n = z.size();
  const std::size_t d = z.front().size();
  std::optional<MaxMargin> best;
  std::vector<std::size_t> idx;
  auto consider = [&](const std::vector<std::size_t>& s) {
    Mat g(s.size(), Vec(s.size()));
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = 0; j < s.size(); ++j) g[i][j] = dot(z[s[i]], z[s[j]]);
    auto a = solve(g, Vec(s.size(), 1.0));
    if (!a) return;
    for (double v : *a)
      if (v < -1e-12) return;
    Vec w(d, 0.0);
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t k = 0; k < d; ++k) w[k] += (*a)[i] * z[s[i]][k];
    for (const auto& zi : z)
      if (dot(w, zi) < 1.0 - 1e-10) return;
    const double nw = norm(w);
    if (!best || nw < 1.0 / best->margin) {
      Vec u = w;
      for (double& v : u) v /= nw;
      best = MaxMargin{w, u, 1.0 / nw};
    }
  };
  // enumerate subsets of size 1..d
  std::vector<std::size_t> s;
  auto rec = [&](auto&& self, std::size_t start) -> void {
    if (!s.empty()) consider(s);
    if (s.size() == d) return;
    for (std::size_t i = start; i < n; ++i) {
      s.push_back(i);
      self(self, i + 1);
      s.pop_back();
    }
  };
  rec(rec, 0);
  return best;
}

// Grid search for min |sum a_i g_i| over the simplex: a coarse pass with step
// 1/coarse followed by a fine pass with step 1/fine around the coarse winner.
inline double grid_min_norm(const std::vector<Vec>& g, int coarse = 100, int fine = 1000) {
  const std::size_t m = g.size();
  const std::size_t d = g.front().size();
  auto value = [&](const std::vector<int>& c, int denom) {
    Vec p(d, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t k = 0; k < d; ++k) p[k] += (static_cast<double>(c[i]) / denom) * g[i][k];
    return norm(p);
  };
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> best_c(m, 0);
  // all compositions of `denom` into m parts with c_i in [lo_i, hi_i]
  auto search = [&](int denom, const std::vector<int>& lo, const std::vector<int>& hi) {
    std::vector<int> c(m, 0);
    auto rec = [&](auto&& self, std::size_t i, int left) -> void {
      if (i + 1 == m) {
        if (left < lo[i] || left > hi[i]) return;
        c[i] = left;
        const double v = value(c, denom);
        if (v < best) {
          best = v;
          best_c = c;
        }
        return;
      }
      for (int v = std::max(0, lo[i]); v <= std::min(left, hi[i]); ++v) {
        c[i] = v;
        self(self, i + 1, left - v);
      }
    };
    rec(rec, 0, denom);
  };
  search(coarse, std::vector<int>(m, 0), std::vector<int>(m, coarse));
  const int ratio = fine / coarse;
  std::vector<int> lo(m), hi(m);
  for (std::size_t i = 0; i < m; ++i) {
    lo[i] = std::max(0, (best_c[i] - 3) * ratio);
    hi[i] = std::min(fine, (best_c[i] + 3) * ratio);
  }
  search(fine, lo, hi);
  return best;
}

// Angle between two vectors in radians.
inline double angle(const Vec& a, const Vec& b) {
  const double c = std::clamp(dot(a, b) / (norm(a) * norm(b)), -1.0, 1.0);
  return std::acos(c);
}

}  // namespace oracle
