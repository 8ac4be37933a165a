#include "hbias/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hbias/error.hpp"
#include "hbias/numeric.hpp"

namespace hbias {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double log_binomial(std::size_t n, std::size_t k) {
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

// Calls fn(batch) for every k-subset of {0..n-1} in lexicographic order.
template <typename Fn>
void for_each_subset(std::size_t n, std::size_t k, Fn&& fn) {
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  while (true) {
    fn(std::span<const std::size_t>(idx));
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

struct Quartiles {
  double first_max = 0.0;
  double last_max = 0.0;
  double first_mean = 0.0;
  double last_mean = 0.0;
};

Quartiles quartiles(std::span<const double> v) {
  Quartiles q;
  const std::size_t n = v.size();
  const std::size_t m = std::max<std::size_t>(1, (n + 3) / 4);
  for (std::size_t i = 0; i < m; ++i) {
    q.first_max = std::max(q.first_max, v[i]);
    q.first_mean += v[i] / static_cast<double>(m);
    q.last_max = std::max(q.last_max, v[n - 1 - i]);
    q.last_mean += v[n - 1 - i] / static_cast<double>(m);
  }
  return q;
}

// Loss-weighted per-sample quantities of one iterate.
struct IterateState {
  SampleField field;
  std::vector<double> lambda;
  std::vector<double> g_bar;
  std::vector<double> g_bar_s;
  EffectiveSteps steps;
};

IterateState iterate_state(const ExperimentConfig& cfg, std::uint64_t k,
                           std::span<const double> w, const Dataset& data) {
  IterateState st;
  st.field = evaluate_field(cfg.spec, w, data, cfg.kink);
  if (st.field.norm_w == 0.0) throw DomainError("iterate is the zero vector");
  const std::size_t L = cfg.spec.depth();
  const double scale = std::pow(st.field.norm_w, static_cast<double>(L));
  st.lambda = simplex_weights(cfg.loss, st.field.p_unit, scale);
  AggregatedDirection agg = aggregated_direction(st.field.grad_unit, st.lambda, st.field.u);
  st.g_bar = std::move(agg.g_bar);
  st.g_bar_s = std::move(agg.g_bar_s);
  st.steps = effective_steps(cfg.gamma.at(k), st.field.norm_w, L, cfg.loss, st.field.p_unit);
  return st;
}

// Unprojected noise (n/n_b) Σ_{i∈B} λ_i g_i - ḡ.
std::vector<double> raw_noise(const IterateState& st, std::span<const std::size_t> batch) {
  const std::size_t n = st.lambda.size();
  std::vector<double> eta(st.g_bar.size(), 0.0);
  if (batch.size() == n) return eta;
  const double ratio = static_cast<double>(n) / static_cast<double>(batch.size());
  for (std::size_t i : batch) axpy(ratio * st.lambda[i], st.field.grad_unit[i], eta);
  for (std::size_t j = 0; j < eta.size(); ++j) eta[j] -= st.g_bar[j];
  return eta;
}

double tangency(std::span<const double> v, std::span<const double> u) {
  const double n = norm2(v);
  return n > 0.0 ? std::abs(dot(v, u)) / n : 0.0;
}

}  // namespace

std::vector<double> normalize(std::span<const double> w) {
  const double n = norm2(w);
  if (n == 0.0) throw DomainError("cannot normalize the zero vector");
  std::vector<double> u(w.begin(), w.end());
  for (double& v : u) v /= n;
  return u;
}

std::vector<double> simplex_weights(const LossKind& loss, std::span<const double> p_unit,
                                    double scale) {
  if (!(scale > 0.0)) throw DomainError("simplex_weights needs a positive scale");
  std::vector<double> logs(p_unit.size());
  for (std::size_t i = 0; i < p_unit.size(); ++i) logs[i] = log_neg_deriv(loss, scale * p_unit[i]);
  const double total = logsumexp(logs);
  std::vector<double> lambda(p_unit.size());
  if (total == kNegInf) {
    // every -l' vanished (power losses at q = 0): the limit is uniform
    std::fill(lambda.begin(), lambda.end(), 1.0 / static_cast<double>(p_unit.size()));
    return lambda;
  }
  for (std::size_t i = 0; i < p_unit.size(); ++i) lambda[i] = std::exp(logs[i] - total);
  return lambda;
}

double EffectiveSteps::gamma_tilde() const { return std::exp(log_gamma_tilde); }
double EffectiveSteps::gamma_bar() const { return std::exp(log_gamma_bar); }

EffectiveSteps effective_steps(double gamma_k, double norm_w, std::size_t depth,
                               const LossKind& loss, std::span<const double> p_unit) {
  if (!(norm_w > 0.0)) throw DomainError("effective_steps needs a nonzero iterate");
  const double L = static_cast<double>(depth);
  const double scale = std::pow(norm_w, L);
  std::vector<double> logs(p_unit.size());
  for (std::size_t i = 0; i < p_unit.size(); ++i) logs[i] = log_neg_deriv(loss, scale * p_unit[i]);
  EffectiveSteps out;
  const double log_norm = std::log(norm_w);
  out.log_gamma_tilde = std::log(gamma_k) - std::log(static_cast<double>(p_unit.size())) +
                        (L - 1.0) * log_norm + logsumexp(logs);
  out.log_gamma_bar = out.log_gamma_tilde - log_norm;
  return out;
}

AggregatedDirection aggregated_direction(const std::vector<std::vector<double>>& grads,
                                         std::span<const double> lambda,
                                         std::span<const double> u) {
  if (grads.size() != lambda.size())
    throw DimensionError("aggregated_direction: " + std::to_string(grads.size()) +
                         " gradients but " + std::to_string(lambda.size()) + " weights");
  AggregatedDirection out;
  out.g_bar.assign(u.size(), 0.0);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].size() != u.size()) throw DimensionError("gradient length does not match u");
    axpy(lambda[i], grads[i], out.g_bar);
  }
  out.g_bar_s = tangent_projection(out.g_bar, u);
  return out;
}

std::vector<double> remainder_from_increment(std::span<const double> increment, double gamma_bar,
                                             std::span<const double> g_bar_s,
                                             std::span<const double> eta_bar) {
  if (!(gamma_bar > 0.0)) throw DomainError("remainder undefined for a zero effective step");
  std::vector<double> r(increment.begin(), increment.end());
  const double inv = 1.0 / (gamma_bar * gamma_bar);
  for (std::size_t i = 0; i < r.size(); ++i)
    r[i] = (r[i] - gamma_bar * g_bar_s[i] - gamma_bar * eta_bar[i]) * inv;
  return r;
}

std::vector<double> decompose_update(std::span<const double> u_k, std::span<const double> u_next,
                                     double gamma_bar, std::span<const double> g_bar_s,
                                     std::span<const double> eta_bar) {
  if (u_k.size() != u_next.size() || u_k.size() != g_bar_s.size() ||
      u_k.size() != eta_bar.size())
    throw DimensionError("decompose_update: vector lengths differ");
  std::vector<double> inc(u_k.size());
  for (std::size_t i = 0; i < inc.size(); ++i) inc[i] = u_next[i] - u_k[i];
  return remainder_from_increment(inc, gamma_bar, g_bar_s, eta_bar);
}

std::vector<double> direction_increment(std::span<const double> w_k,
                                        std::span<const double> w_next) {
  const double a = norm2(w_k);
  const double b = norm2(w_next);
  if (a == 0.0 || b == 0.0) throw DomainError("direction increment needs nonzero iterates");
  std::vector<double> delta(w_k.size());
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = w_next[i] - w_k[i];
  // a - b = -(2 <w, Δ> + ‖Δ‖^2) / (a + b)
  const double a_minus_b = -(2.0 * dot(w_k, delta) + dot(delta, delta)) / (a + b);
  std::vector<double> out(w_k.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = delta[i] / b + w_k[i] * a_minus_b / (a * b);
  return out;
}

std::vector<double> noise_term(const NetSpec& spec, std::span<const double> w_k,
                               std::span<const std::size_t> batch, const Dataset& data,
                               const LossKind& loss, KinkSelection kink) {
  if (batch.empty() || batch.size() > data.size()) throw DimensionError("invalid batch");
  for (std::size_t i : batch)
    if (i >= data.size()) throw DimensionError("batch index out of range");
  ExperimentConfig cfg;
  cfg.spec = spec;
  cfg.loss = loss;
  cfg.kink = kink;
  const IterateState st = iterate_state(cfg, 0, w_k, data);
  return tangent_projection(raw_noise(st, batch), st.field.u);
}

LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
  LinearFit fit;
  fit.points = x.size();
  if (x.size() < 2) return fit;
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) return fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

GrowthFit fit_log_growth(std::span<const StepRecord> records, Window window, std::size_t depth,
                         std::optional<std::uint64_t> k_sep) {
  if (!k_sep) throw DomainError("growth fit requires a detected separation");
  if (window.k_lo < *k_sep)
    throw DomainError("growth window starts at k = " + std::to_string(window.k_lo) +
                      ", before separation at k = " + std::to_string(*k_sep));
  const double L = static_cast<double>(depth);
  std::vector<double> x, y;
  GrowthFit fit;
  fit.window = window;
  fit.c1_hat = std::numeric_limits<double>::infinity();
  fit.c2_hat = 0.0;
  for (const auto& r : records) {
    if (r.k < window.k_lo || r.k > window.k_hi || r.k < 2) continue;
    const double lk = std::log(static_cast<double>(r.k));
    const double m = std::pow(r.norm_w, L);
    x.push_back(lk);
    y.push_back(m);
    fit.c1_hat = std::min(fit.c1_hat, m / lk);
    fit.c2_hat = std::max(fit.c2_hat, m / lk);
  }
  if (x.size() < 2) throw DomainError("growth window holds fewer than two records");
  const LinearFit lf = least_squares(x, y);
  fit.slope = lf.slope;
  fit.intercept = lf.intercept;
  fit.r_squared = lf.r_squared;
  fit.points = lf.points;
  fit.growth_law_ok = lf.slope > 0.0 && fit.c1_hat > 0.0;
  return fit;
}

std::optional<Window> default_growth_window(std::span<const StepRecord> records,
                                            std::optional<std::uint64_t> k_sep) {
  if (!k_sep) return std::nullopt;
  std::vector<std::uint64_t> ks;
  for (const auto& r : records)
    if (r.k >= *k_sep && r.k >= 2) ks.push_back(r.k);
  if (ks.size() < 4) return std::nullopt;
  return Window{ks[ks.size() / 2], ks.back()};
}

EPrimeReport eprime_diagnostics(std::span<const StepRecord> records, std::size_t depth,
                                double q0) {
  if (records.empty()) throw DomainError("eprime_diagnostics needs a nonempty trajectory");
  const double L = static_cast<double>(depth);
  std::vector<const StepRecord*> usable;
  for (const auto& r : records)
    if (r.k >= 1 && r.norm_w > 0.0) usable.push_back(&r);
  EPrimeReport rep;
  if (usable.size() < 4) {
    rep.norm_diverges.detail = rep.scaled_deriv_vanishes.detail = rep.margin_above_q0.detail =
        "too few records";
    return rep;
  }
  const std::size_t start = usable.size() / 2;
  rep.window = {usable[start]->k, usable.back()->k};
  std::vector<double> lk, norms, logq;
  double min_margin = std::numeric_limits<double>::infinity();
  for (std::size_t j = start; j < usable.size(); ++j) {
    const StepRecord& r = *usable[j];
    lk.push_back(std::log(static_cast<double>(r.k)));
    norms.push_back(r.norm_w);
    logq.push_back((L - 2.0) * std::log(r.norm_w) + r.log_sum_neg_deriv);
    min_margin = std::min(min_margin, std::pow(r.norm_w, L) * r.normalized_margin);
  }
  const LinearFit fn = least_squares(lk, norms);
  rep.norm_diverges.trend_slope = fn.slope;
  rep.norm_diverges.satisfied = fn.slope > 0.0 && norms.back() > norms.front();
  rep.norm_diverges.detail = "slope of ||w_k|| against log k = " + format_double(fn.slope);

  const LinearFit fq = least_squares(lk, logq);
  rep.scaled_deriv_vanishes.trend_slope = fq.slope;
  rep.scaled_deriv_vanishes.satisfied = fq.slope < 0.0 && logq.back() < logq.front();
  rep.scaled_deriv_vanishes.detail =
      "slope of log(||w_k||^(L-2) sum -l') against log k = " + format_double(fq.slope);

  rep.margin_above_q0.trend_slope = 0.0;
  rep.margin_above_q0.satisfied = min_margin >= q0;
  rep.margin_above_q0.detail = "min margin m(w_k) on window = " + format_double(min_margin);
  return rep;
}

DecompositionRecord decompose_snapshot(const Trajectory& traj, const Snapshot& snap,
                                       const Dataset& data, double active_tol) {
  const ExperimentConfig& cfg = traj.config;
  const IterateState st = iterate_state(cfg, snap.k, snap.w, data);
  const std::vector<double>& u = st.field.u;

  DecompositionRecord rec;
  rec.k = snap.k;
  rec.norm_w = st.field.norm_w;
  rec.margin = *std::min_element(st.field.p_unit.begin(), st.field.p_unit.end());
  rec.log_gamma_bar = st.steps.log_gamma_bar;
  rec.gamma_bar = st.steps.gamma_bar();
  rec.lambda = st.lambda;
  rec.g_bar_s = st.g_bar_s;
  const std::vector<double> eta_tilde = raw_noise(st, snap.batch);
  rec.eta_bar = tangent_projection(eta_tilde, u);
  rec.tangency_g = tangency(rec.g_bar_s, u);
  rec.tangency_eta = tangency(rec.eta_bar, u);

  // u_{k+1} = normalize(u_k + γ̄ (ḡ + η̃))
  std::vector<double> predicted = u;
  for (std::size_t j = 0; j < predicted.size(); ++j)
    predicted[j] += rec.gamma_bar * (st.g_bar[j] + eta_tilde[j]);
  predicted = normalize(predicted);
  const std::vector<double> u_next = normalize(snap.w_next);
  double err = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) err += (predicted[j] - u_next[j]) * (predicted[j] - u_next[j]);
  rec.reconstruction_error = std::sqrt(err);

  if (rec.gamma_bar > 0.0)
    rec.r = remainder_from_increment(direction_increment(snap.w, snap.w_next), rec.gamma_bar,
                                     rec.g_bar_s, rec.eta_bar);

  const ActiveSet act = active_set(st.field.p_unit, active_tol);
  const GeneratorSet gens = spherical_generators(cfg.spec, u, data, act, cfg.kink, true);
  rec.criticality = min_norm_in_hull(gens.vectors).norm;
  rec.field_gap = distance_to_hull(rec.g_bar_s, gens.vectors);
  return rec;
}

std::string to_string(ClaimStatus s) {
  switch (s) {
    case ClaimStatus::Pass:
      return "pass";
    case ClaimStatus::Fail:
      return "fail";
    case ClaimStatus::NotApplicable:
      return "not applicable";
  }
  return "unknown";
}

namespace {

ClaimResult not_applicable(const std::string& why) { return {ClaimStatus::NotApplicable, why}; }

ClaimResult verdict(bool ok, std::string detail) {
  return {ok ? ClaimStatus::Pass : ClaimStatus::Fail, std::move(detail)};
}

// Exact (exhaustive) or sampled mean of η̄ over batches at one iterate,
// relative to ‖ḡ‖. Returns {relative norm of the mean, allowed bound}.
std::pair<double, double> noise_mean_check(const ExperimentConfig& cfg, std::uint64_t k,
                                           std::span<const double> w, const Dataset& data,
                                           std::size_t n_b, const AnalysisOptions& opts,
                                           std::uint64_t salt) {
  const IterateState st = iterate_state(cfg, k, w, data);
  const std::size_t n = data.size();
  const std::size_t d = st.g_bar.size();
  const double ref = std::max(norm2(st.g_bar), 1e-300);
  std::vector<double> mean(d, 0.0), sq(d, 0.0);
  double count = 0.0;
  auto accumulate = [&](std::span<const std::size_t> b) {
    const std::vector<double> eta = tangent_projection(raw_noise(st, b), st.field.u);
    for (std::size_t j = 0; j < d; ++j) {
      mean[j] += eta[j];
      sq[j] += eta[j] * eta[j];
    }
    count += 1.0;
  };
  const bool exhaustive =
      log_binomial(n, n_b) <= std::log(static_cast<double>(opts.max_exhaustive_batches));
  if (exhaustive) {
    for_each_subset(n, n_b, accumulate);
  } else {
    Rng rng(derive_seed(cfg.seed, 0x5eed + salt));
    for (std::size_t s = 0; s < opts.sampled_batches; ++s) accumulate(sample_batch(rng, n, n_b));
  }
  double var = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    mean[j] /= count;
    var += std::max(0.0, sq[j] / count - mean[j] * mean[j]);
  }
  const double rel = norm2(mean) / ref;
  const double bound = exhaustive ? 1e-12 : 4.0 * std::sqrt(var / count) / ref + 1e-12;
  return {rel, bound};
}

}  // namespace

AnalysisSummary analyze(const Trajectory& traj, const Dataset& data, const AnalysisOptions& opts) {
  AnalysisSummary out;
  const ExperimentConfig& cfg = traj.config;
  data.validate();
  if (data.size() != traj.n)
    throw DimensionError("trajectory was produced on " + std::to_string(traj.n) +
                         " samples, dataset has " + std::to_string(data.size()));
  if (traj.records.empty()) throw DomainError("trajectory has no records");
  const std::size_t L = cfg.spec.depth();
  const std::size_t n = data.size();
  const std::size_t n_b = cfg.resolved_batch(n);
  out.k_sep = traj.k_sep;
  if (traj.aborted) out.warnings.push_back("trajectory aborted: " + traj.abort_reason);

  // decomposition at every snapshot
  for (const auto& snap : traj.snapshots) {
    if (norm2(snap.w) == 0.0) continue;
    out.decomposition.push_back(decompose_snapshot(traj, snap, data, opts.active_tol));
    const auto& d = out.decomposition.back();
    out.max_reconstruction_error = std::max(out.max_reconstruction_error, d.reconstruction_error);
    out.max_tangency = std::max({out.max_tangency, d.tangency_g, d.tangency_eta});
  }
  if (traj.snapshots.empty()) out.warnings.push_back("no snapshots: remainder and noise checks skipped");

  // final state
  const StepRecord& last = traj.records.back();
  out.final_margin = last.normalized_margin;
  const std::uint64_t K = last.k;
  {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& r : traj.records)
      if (r.k * 10 >= K) {
        lo = std::min(lo, r.normalized_margin);
        hi = std::max(hi, r.normalized_margin);
      }
    out.margin_oscillation = hi - lo;
  }
  if (norm2(traj.final_weights) > 0.0) {
    CriticalityOptions co;
    co.tol = opts.active_tol;
    const CriticalityReport rep = criticality_residual(cfg.spec, traj.final_weights, data, cfg.kink, co);
    out.final_residual = rep.residual;
    out.final_kkt_residual = rep.kkt_residual;
  }
  out.eprime = eprime_diagnostics(traj.records, L, cfg.loss.q0());

  // claim 3 holds without separation
  if (n_b == n) {
    bool zero = true;
    for (const auto& d : out.decomposition)
      for (double v : d.eta_bar) zero = zero && v == 0.0;
    out.claim3 = verdict(zero, "full batch: projected noise identically zero");
  } else if (traj.snapshots.empty()) {
    out.claim3 = not_applicable("no snapshots");
  } else {
    const std::size_t stride = std::max<std::size_t>(1, traj.snapshots.size() / 20);
    double worst_excess = -std::numeric_limits<double>::infinity();
    double worst_rel = 0.0;
    bool ok = true;
    std::size_t checked = 0;
    for (std::size_t s = 0; s < traj.snapshots.size(); s += stride) {
      const Snapshot& snap = traj.snapshots[s];
      if (norm2(snap.w) == 0.0) continue;
      const auto [rel, bound] = noise_mean_check(cfg, snap.k, snap.w, data, n_b, opts, s);
      ok = ok && rel <= bound;
      worst_rel = std::max(worst_rel, rel);
      worst_excess = std::max(worst_excess, rel - bound);
      ++checked;
    }
    out.claim3 = verdict(ok, "mean projected noise over batches, max relative norm " +
                                 format_double(worst_rel) + " at " + std::to_string(checked) +
                                 " snapshots");
  }

  if (!traj.k_sep) {
    const std::string why = "not applicable (no separation detected)";
    out.claim1 = out.claim2 = out.claim4 = out.loss_decay = not_applicable(why);
    return out;
  }
  const std::uint64_t k_sep = *traj.k_sep;

  // growth law and loss decay
  const std::optional<Window> win =
      opts.growth_window ? opts.growth_window : default_growth_window(traj.records, traj.k_sep);
  if (win) {
    out.growth = fit_log_growth(traj.records, *win, L, traj.k_sep);
    std::vector<double> lk, ll;
    out.min_window_margin = std::numeric_limits<double>::infinity();
    for (const auto& r : traj.records)
      if (r.k >= win->k_lo && r.k <= win->k_hi && r.k >= 2) {
        lk.push_back(std::log(static_cast<double>(r.k)));
        ll.push_back(r.log_loss);
        out.min_window_margin = std::min(out.min_window_margin, r.normalized_margin);
      }
    out.log_loss_fit = least_squares(lk, ll);
    const bool ok = out.log_loss_fit->slope < 0.0 && out.log_loss_fit->r_squared >= 0.95 &&
                    out.log_loss_fit->slope <= -0.5 * out.min_window_margin * out.growth->slope;
    out.loss_decay = verdict(ok, "log-loss slope " + format_double(out.log_loss_fit->slope) +
                                     ", R^2 " + format_double(out.log_loss_fit->r_squared));
  } else {
    out.loss_decay = not_applicable("too few post-separation records");
    out.warnings.push_back("growth fit skipped: too few post-separation records");
  }

  // claim 2: effective steps
  {
    std::vector<const StepRecord*> post;
    for (const auto& r : traj.records)
      if (r.k >= k_sep && r.k >= 1 && std::isfinite(r.log_gamma_bar)) post.push_back(&r);
    std::size_t increases = 0;
    std::vector<double> lk, lg;
    for (std::size_t j = 0; j < post.size(); ++j) {
      if (j > 0 && post[j]->log_gamma_bar > post[j - 1]->log_gamma_bar) ++increases;
      lk.push_back(std::log(static_cast<double>(post[j]->k)));
      lg.push_back(post[j]->log_gamma_bar);
    }
    out.gamma_violation_fraction =
        post.size() > 1 ? static_cast<double>(increases) / static_cast<double>(post.size() - 1) : 0.0;
    if (post.size() >= 2) out.gamma_power_fit = least_squares(lk, lg);

    // Riemann sums of γ̄ over (K/100, K/10] and (K/10, K] in the log domain
    std::vector<double> last_terms, prev_terms;
    for (std::size_t j = 0; j + 1 < traj.records.size(); ++j) {
      const StepRecord& r = traj.records[j];
      if (!std::isfinite(r.log_gamma_bar)) continue;
      const double term =
          r.log_gamma_bar + std::log(static_cast<double>(traj.records[j + 1].k - r.k));
      if (r.k * 10 >= K)
        last_terms.push_back(term);
      else if (r.k * 100 >= K)
        prev_terms.push_back(term);
    }
    const double log_last = logsumexp(last_terms);
    const double log_prev = logsumexp(prev_terms);
    out.last_decade_sum = std::exp(log_last);
    out.previous_decade_sum = std::exp(log_prev);
    if (post.size() < 3 || prev_terms.empty() || last_terms.empty()) {
      out.claim2 = not_applicable("too few post-separation records or iterations for decade sums");
    } else {
      const bool monotone = out.gamma_violation_fraction <= opts.violation_fraction;
      const bool decaying = out.gamma_power_fit->slope < 0.0;
      const bool diverging = log_last > std::log(0.1) + log_prev;
      out.claim2 = verdict(monotone && decaying && diverging,
                           "increase fraction " + format_double(out.gamma_violation_fraction) +
                               ", power-law exponent " + format_double(out.gamma_power_fit->slope) +
                               ", decade sums " + format_double(out.last_decade_sum) + " / " +
                               format_double(out.previous_decade_sum));
    }
  }

  // claims 1 and 4 on post-separation snapshots
  {
    std::vector<double> rnorm, gaps;
    for (const auto& d : out.decomposition) {
      if (d.k < k_sep) continue;
      if (d.r) rnorm.push_back(norm2(*d.r));
      gaps.push_back(d.field_gap);
    }
    if (rnorm.size() < 4) {
      out.claim1 = not_applicable("fewer than four post-separation snapshots");
    } else {
      const Quartiles q = quartiles(rnorm);
      out.remainder_first_quartile_max = q.first_max;
      out.remainder_last_quartile_max = q.last_max;
      out.claim1 = verdict(q.last_max <= 2.0 * q.first_max,
                           "max ||r_k|| first quartile " + format_double(q.first_max) +
                               ", last quartile " + format_double(q.last_max));
    }
    if (gaps.size() < 4) {
      out.claim4 = not_applicable("fewer than four post-separation snapshots");
    } else {
      const Quartiles q = quartiles(gaps);
      out.claim4 = verdict(q.last_mean <= q.first_mean,
                           "mean dist(g_bar_s, D_s(u_k)) first quartile " +
                               format_double(q.first_mean) + ", last quartile " +
                               format_double(q.last_mean));
    }
  }
  (void)kNaN;
  return out;
}

}  // namespace hbias
