#include "hbias/criticality.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "hbias/error.hpp"
#include "hbias/numeric.hpp"

namespace hbias {

namespace {

void check_unit(std::span<const double> u) {
  const double n = norm2(u);
  if (std::abs(n - 1.0) > 1e-9)
    throw DomainError("expected a unit vector, got norm " + format_double(n));
}

std::vector<double> normalized(std::span<const double> w) {
  const double n = norm2(w);
  if (n == 0.0) throw DomainError("cannot normalize the zero vector");
  std::vector<double> u(w.begin(), w.end());
  for (double& v : u) v /= n;
  return u;
}

// Affine minimiser of ‖Σ α_i p_i‖ subject to Σ α_i = 1 over the corral S,
// written as p_0 + D β with D = [p_1 - p_0, ...].
std::vector<double> affine_minimizer(const std::vector<std::vector<double>>& gens,
                                     const std::vector<std::size_t>& corral) {
  const std::size_t k = corral.size();
  if (k == 1) return {1.0};
  const std::size_t d = gens[corral[0]].size();
  Eigen::MatrixXd D(d, k - 1);
  Eigen::VectorXd p0(d);
  for (std::size_t r = 0; r < d; ++r) p0(r) = gens[corral[0]][r];
  for (std::size_t c = 1; c < k; ++c)
    for (std::size_t r = 0; r < d; ++r) D(r, c - 1) = gens[corral[c]][r] - p0(r);
  const Eigen::VectorXd beta = D.colPivHouseholderQr().solve(-p0);
  std::vector<double> alpha(k);
  alpha[0] = 1.0 - beta.sum();
  for (std::size_t c = 1; c < k; ++c) alpha[c] = beta(c - 1);
  return alpha;
}

std::vector<double> combine(const std::vector<std::vector<double>>& gens,
                            const std::vector<std::size_t>& corral,
                            const std::vector<double>& lambda) {
  std::vector<double> x(gens[corral[0]].size(), 0.0);
  for (std::size_t i = 0; i < corral.size(); ++i) axpy(lambda[i], gens[corral[i]], x);
  return x;
}

// Lawson-Hanson nonnegative least squares, returns min ‖A x - b‖ over x >= 0.
double nnls_residual(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  const Eigen::Index m = A.cols();
  if (m == 0) return b.norm();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(m);
  std::vector<bool> passive(static_cast<std::size_t>(m), false);
  const double tol = 1e-12 * std::max(1.0, A.norm() * b.norm());
  for (Eigen::Index outer = 0; outer < 3 * m + 10; ++outer) {
    const Eigen::VectorXd grad = A.transpose() * (b - A * x);
    Eigen::Index best = -1;
    double best_val = tol;
    for (Eigen::Index j = 0; j < m; ++j)
      if (!passive[static_cast<std::size_t>(j)] && grad(j) > best_val) {
        best_val = grad(j);
        best = j;
      }
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = true;
    for (Eigen::Index inner = 0; inner < 3 * m + 10; ++inner) {
      std::vector<Eigen::Index> cols;
      for (Eigen::Index j = 0; j < m; ++j)
        if (passive[static_cast<std::size_t>(j)]) cols.push_back(j);
      Eigen::MatrixXd Ap(A.rows(), static_cast<Eigen::Index>(cols.size()));
      for (std::size_t c = 0; c < cols.size(); ++c) Ap.col(static_cast<Eigen::Index>(c)) = A.col(cols[c]);
      const Eigen::VectorXd s_p = Ap.colPivHouseholderQr().solve(b);
      Eigen::VectorXd s = Eigen::VectorXd::Zero(m);
      for (std::size_t c = 0; c < cols.size(); ++c) s(cols[c]) = s_p(static_cast<Eigen::Index>(c));
      double alpha = 1.0;
      bool feasible = true;
      for (Eigen::Index j : cols)
        if (s(j) <= 0.0) {
          feasible = false;
          const double denom = x(j) - s(j);
          if (denom > 0.0) alpha = std::min(alpha, x(j) / denom);
        }
      if (feasible) {
        x = s;
        break;
      }
      x += alpha * (s - x);
      for (Eigen::Index j : cols)
        if (x(j) <= 1e-15) {
          x(j) = 0.0;
          passive[static_cast<std::size_t>(j)] = false;
        }
    }
  }
  return (A * x - b).norm();
}

std::string describe_field(const NetSpec& spec, KinkSelection kink, bool enumerate) {
  if (!spec.activation.has_kink()) return "backprop (no kinks)";
  std::string s = "backprop, kink selection e=" + format_double(kink.e);
  if (enumerate)
    s += ", zero pre-activations enumerated over {" + format_double(spec.activation.kink_lo()) +
         ", " + format_double(spec.activation.kink_hi()) + "}";
  return s;
}

}  // namespace

ActiveSet active_set(std::span<const double> p_values, double tol) {
  if (p_values.empty()) throw DomainError("active_set needs at least one value");
  if (!(tol >= 0.0)) throw DomainError("active-set tolerance must be nonnegative");
  ActiveSet out;
  out.tol = tol;
  out.margin = *std::min_element(p_values.begin(), p_values.end());
  const double cutoff = out.margin + tol * (1.0 + std::abs(out.margin));
  for (std::size_t i = 0; i < p_values.size(); ++i)
    if (p_values[i] <= cutoff) out.indices.push_back(i);
  return out;
}

GeneratorSet margin_field_generators(const NetSpec& spec, std::span<const double> w,
                                     const Dataset& data, const ActiveSet& active,
                                     KinkSelection kink, bool enumerate_kinks) {
  NetEvaluator ev(spec);
  GeneratorSet out;
  std::vector<double> grad(w.size());
  const double lo = spec.activation.kink_lo();
  const double hi = spec.activation.kink_hi();
  for (std::size_t i : active.indices) {
    if (i >= data.size()) throw DimensionError("active index out of range");
    const Sample& s = data.samples[i];
    ev.signed_output_and_grad(w, s.x, s.y, kink, grad);
    const std::size_t sites = ev.zero_sites().size();
    if (!enumerate_kinks || sites == 0 || sites > kMaxEnumeratedKinks) {
      if (enumerate_kinks && sites > kMaxEnumeratedKinks) out.under_approximated = true;
      out.vectors.push_back(grad);
      out.owner.push_back(i);
      continue;
    }
    std::vector<double> choice(sites);
    for (std::uint32_t mask = 0; mask < (1u << sites); ++mask) {
      for (std::size_t b = 0; b < sites; ++b) choice[b] = (mask >> b) & 1u ? hi : lo;
      ev.signed_output_and_grad(w, s.x, s.y, kink, grad, choice);
      out.vectors.push_back(grad);
      out.owner.push_back(i);
    }
  }
  return out;
}

GeneratorSet spherical_generators(const NetSpec& spec, std::span<const double> u,
                                  const Dataset& data, const ActiveSet& active, KinkSelection kink,
                                  bool enumerate_kinks) {
  check_unit(u);
  GeneratorSet g = margin_field_generators(spec, u, data, active, kink, enumerate_kinks);
  for (auto& v : g.vectors) v = tangent_projection(v, u);
  return g;
}

MinNormResult min_norm_in_hull(const std::vector<std::vector<double>>& generators, double tol) {
  if (generators.empty()) throw DomainError("min_norm_in_hull needs at least one generator");
  const std::size_t m = generators.size();
  const std::size_t d = generators[0].size();
  for (const auto& g : generators)
    if (g.size() != d) throw DimensionError("generators have different lengths");

  double scale = 0.0;
  std::size_t start = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < m; ++j) {
    const double n2 = dot(generators[j], generators[j]);
    scale = std::max(scale, n2);
    if (n2 < best) {
      best = n2;
      start = j;
    }
  }

  MinNormResult res;
  std::vector<std::size_t> corral = {start};
  std::vector<double> lambda = {1.0};
  std::vector<double> x = generators[start];
  const std::size_t cap = std::max<std::size_t>(10 * m * m, 10);

  auto finish = [&](bool converged) {
    res.converged = converged;
    res.point = x;
    res.norm = norm2(x);
    res.weights.assign(m, 0.0);
    for (std::size_t i = 0; i < corral.size(); ++i) res.weights[corral[i]] += lambda[i];
    return res;
  };

  if (scale == 0.0) return finish(true);
  for (res.iterations = 0; res.iterations < cap; ++res.iterations) {
    const double xx = dot(x, x);
    std::size_t j_best = 0;
    double min_ip = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      const double ip = dot(x, generators[j]);
      if (ip < min_ip) {
        min_ip = ip;
        j_best = j;
      }
    }
    if (xx - min_ip <= tol * scale) return finish(true);
    if (std::find(corral.begin(), corral.end(), j_best) != corral.end()) return finish(true);
    corral.push_back(j_best);
    lambda.push_back(0.0);

    for (std::size_t minor = 0; minor <= corral.size() + 1; ++minor) {
      const std::vector<double> alpha = affine_minimizer(generators, corral);
      const bool interior =
          std::all_of(alpha.begin(), alpha.end(), [](double a) { return a > 1e-14; });
      if (interior) {
        lambda = alpha;
        x = combine(generators, corral, lambda);
        break;
      }
      double theta = 1.0;
      for (std::size_t i = 0; i < corral.size(); ++i)
        if (alpha[i] <= 1e-14 && lambda[i] - alpha[i] > 0.0)
          theta = std::min(theta, lambda[i] / (lambda[i] - alpha[i]));
      for (std::size_t i = 0; i < corral.size(); ++i)
        lambda[i] += theta * (alpha[i] - lambda[i]);
      std::vector<std::size_t> keep_idx;
      std::vector<double> keep_lambda;
      for (std::size_t i = 0; i < corral.size(); ++i)
        if (lambda[i] > 1e-14) {
          keep_idx.push_back(corral[i]);
          keep_lambda.push_back(lambda[i]);
        }
      if (keep_idx.empty()) {
        keep_idx.push_back(corral.back());
        keep_lambda.push_back(1.0);
      }
      double total = 0.0;
      for (double l : keep_lambda) total += l;
      for (double& l : keep_lambda) l /= total;
      corral = std::move(keep_idx);
      lambda = std::move(keep_lambda);
      x = combine(generators, corral, lambda);
    }
  }
  return finish(false);
}

double distance_to_hull(std::span<const double> point,
                        const std::vector<std::vector<double>>& generators) {
  std::vector<std::vector<double>> shifted = generators;
  for (auto& g : shifted)
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= point[i];
  return min_norm_in_hull(shifted).norm;
}

std::vector<double> signed_outputs(const NetSpec& spec, std::span<const double> w,
                                   const Dataset& data) {
  NetEvaluator ev(spec);
  std::vector<double> p(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    p[i] = data.samples[i].y * ev.forward(w, data.samples[i].x);
  return p;
}

double margin(const NetSpec& spec, std::span<const double> w, const Dataset& data) {
  const auto p = signed_outputs(spec, w, data);
  return *std::min_element(p.begin(), p.end());
}

CriticalityReport criticality_residual(const NetSpec& spec, std::span<const double> w,
                                       const Dataset& data, KinkSelection kink,
                                       const CriticalityOptions& opts) {
  const std::vector<double> u = normalized(w);
  CriticalityReport rep;
  rep.active = active_set(signed_outputs(spec, u, data), opts.tol);
  GeneratorSet gens = spherical_generators(spec, u, data, rep.active, kink, opts.enumerate_kinks);
  const MinNormResult mn = min_norm_in_hull(gens.vectors);
  rep.generators = std::move(gens.vectors);
  rep.generator_owner = std::move(gens.owner);
  rep.under_approximated = gens.under_approximated;
  rep.min_norm_point = mn.point;
  rep.residual = mn.norm;
  rep.hull_weights = mn.weights;
  rep.converged = mn.converged;
  rep.field = describe_field(spec, kink, opts.enumerate_kinks);
  if (!rep.under_approximated)
    rep.certificate = "exact";
  else
    rep.certificate = rep.residual <= 1e-10 ? "certified_critical" : "upper_bound";
  if (opts.with_kkt && rep.active.margin > 0.0)
    rep.kkt_residual = kkt_residual(spec, u, data, opts.tol, kink, opts.enumerate_kinks);
  return rep;
}

double kkt_residual(const NetSpec& spec, std::span<const double> w, const Dataset& data,
                    double tol, KinkSelection kink, bool enumerate_kinks) {
  const std::vector<double> u = normalized(w);
  const ActiveSet act = active_set(signed_outputs(spec, u, data), tol);
  if (!(act.margin > 0.0))
    throw DomainError("KKT residual is defined only for directions with positive margin");
  const double L = static_cast<double>(spec.depth());
  std::vector<double> w_star = u;
  const double factor = std::pow(act.margin, -1.0 / L);
  for (double& v : w_star) v *= factor;
  const GeneratorSet gens =
      margin_field_generators(spec, w_star, data, act, kink, enumerate_kinks);
  const auto d = static_cast<Eigen::Index>(w_star.size());
  Eigen::MatrixXd A(d, static_cast<Eigen::Index>(gens.vectors.size()));
  for (std::size_t c = 0; c < gens.vectors.size(); ++c)
    for (Eigen::Index r = 0; r < d; ++r)
      A(r, static_cast<Eigen::Index>(c)) = gens.vectors[c][static_cast<std::size_t>(r)];
  const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(w_star.data(), d);
  return nnls_residual(A, b);
}

FlowResult euler_di_flow(const NetSpec& spec, std::span<const double> u0, const Dataset& data,
                         double step, double horizon, double tol, KinkSelection kink,
                         const FlowOptions& opts) {
  if (!(step > 0.0)) throw DomainError("flow step must be positive");
  if (!(horizon >= 0.0)) throw DomainError("flow horizon must be nonnegative");
  check_unit(u0);
  const std::size_t n = data.size();
  const std::size_t max_steps =
      opts.max_steps ? opts.max_steps
                     : static_cast<std::size_t>(20.0 * horizon / step) + 1000;

  NetEvaluator ev(spec);
  std::vector<double> u(u0.begin(), u0.end());
  const std::size_t dim = u.size();
  std::vector<std::vector<double>> grads(n, std::vector<double>(dim));
  std::vector<double> p(n);

  auto evaluate = [&](std::span<const double> at) {
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = ev.signed_output_and_grad(at, data.samples[i].x, data.samples[i].y, kink, grads[i]);
      grads[i] = tangent_projection(grads[i], at);
    }
  };
  // Min-norm point of the hull over the samples within active_tol (1 + |m|)
  // of the margin, from the current evaluation. Its norm is the residual.
  auto hull_point = [&]() {
    const ActiveSet act = active_set(p, opts.active_tol);
    if (opts.enumerate_kinks)
      return min_norm_in_hull(spherical_generators(spec, u, data, act, kink, true).vectors);
    std::vector<std::vector<double>> hull;
    for (std::size_t i : act.indices) hull.push_back(grads[i]);
    return min_norm_in_hull(hull);
  };

  FlowResult res;
  double t = 0.0;
  double h = step;
  evaluate(u);
  MinNormResult mn = hull_point();
  double m = *std::min_element(p.begin(), p.end());
  res.path.push_back({0.0, u, m, mn.norm, 0.0});
  std::vector<double> trial(dim);
  for (std::size_t it = 0; it < max_steps && t < horizon; ++it) {
    if (mn.norm < tol) break;
    // Every hull support point rises at rate |d|^2 along d. Stop where the
    // first inactive sample is predicted to reach the margin so the step
    // does not cross a kink of the min.
    const double eps = opts.active_tol * (1.0 + std::abs(m));
    const double dd = mn.norm * mn.norm;
    double h_eff = std::min(h, horizon - t);
    for (std::size_t i = 0; i < n; ++i) {
      if (p[i] <= m + eps) continue;
      const double closing = dd - dot(grads[i], mn.point);
      if (closing > 0.0 && (p[i] - m) / closing < h_eff) h_eff = (p[i] - m) / closing;
    }
    std::copy(u.begin(), u.end(), trial.begin());
    axpy(h_eff, mn.point, trial);
    const double tn = norm2(trial);
    for (double& v : trial) v /= tn;
    const double m_trial = margin(spec, trial, data);
    if (m_trial < m) {
      ++res.rejected_steps;
      h *= 0.5;
      if (h < step * 1e-12) break;
      continue;
    }
    t += h_eff;
    u = trial;
    evaluate(u);
    mn = hull_point();
    m = *std::min_element(p.begin(), p.end());
    res.path.push_back({t, u, m, mn.norm, h_eff});
    h = std::min(step, 2.0 * h);
  }
  res.final_residual = res.path.back().residual;
  if (res.final_residual < tol) res.converged = true;
  return res;
}

}  // namespace hbias
