#include "hbias/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hbias/error.hpp"
#include "hbias/numeric.hpp"

namespace hbias {

namespace {

constexpr std::uint64_t kBatchStream = 0xba7c;
// |p_i(w)| up to which the gradient coefficient is formed in the linear domain.
constexpr double kLinearDomainLimit = 500.0;

// Scaling of the per-sample gradient at w from the one evaluated at u:
// coefficient -l'(p_i(w)) ‖w‖^{L-1}.
double gradient_coefficient(const LossKind& loss, double p_w, double norm_w, double L) {
  if (norm_w == 0.0) return neg_deriv(loss, p_w);
  if (std::abs(p_w) <= kLinearDomainLimit) return neg_deriv(loss, p_w) * std::pow(norm_w, L - 1.0);
  return std::exp(log_neg_deriv(loss, p_w) + (L - 1.0) * std::log(norm_w));
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

double StepSchedule::at(std::uint64_t k) const {
  if (kind == Kind::Constant) return gamma0;
  return gamma0 / std::pow(static_cast<double>(k) + 1.0, beta);
}

void StepSchedule::validate() const {
  if (!(gamma0 > 0.0) || !std::isfinite(gamma0)) throw ConfigError("step size must be positive");
  // Σγ_k = ∞ and Σγ_k^2 < ∞
  if (kind == Kind::Power && !(beta > 0.5 && beta <= 1.0))
    throw ConfigError("power schedule exponent must lie in (1/2, 1]");
}

void ExperimentConfig::validate() const {
  spec.validate();
  gamma.validate();
  validate_kink(spec.activation, kink);
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (record_stride < 1 || snapshot_stride < 1) throw ConfigError("strides must be >= 1");
  if (batch_size && *batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(init.scale > 0.0)) throw ConfigError("init scale must be positive");
  if (!init.weights.empty() && init.weights.size() != spec.num_params())
    throw ConfigError("init weights have " + std::to_string(init.weights.size()) +
                      " entries, the network has " + std::to_string(spec.num_params()));
}

std::size_t ExperimentConfig::resolved_batch(std::size_t n) const {
  const std::size_t nb = batch_size.value_or(n);
  if (nb < 1 || nb > n)
    throw ConfigError("batch_size " + std::to_string(nb) + " must lie in [1, " + std::to_string(n) +
                      "]");
  return nb;
}

double StepRecord::gamma_tilde() const { return std::exp(log_gamma_tilde); }
double StepRecord::gamma_bar() const { return std::exp(log_gamma_bar); }

double Trajectory::final_margin() const {
  return records.empty() ? std::numeric_limits<double>::quiet_NaN()
                         : records.back().normalized_margin;
}

const Snapshot* Trajectory::snapshot_at(std::uint64_t k) const {
  auto it = std::lower_bound(snapshots.begin(), snapshots.end(), k,
                             [](const Snapshot& s, std::uint64_t key) { return s.k < key; });
  return (it != snapshots.end() && it->k == k) ? &*it : nullptr;
}

std::vector<std::size_t> sample_batch(Rng& rng, std::size_t n, std::size_t n_b) {
  if (n_b < 1 || n_b > n)
    throw ConfigError("batch size " + std::to_string(n_b) + " must lie in [1, " +
                      std::to_string(n) + "]");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t j = 0; j < n_b; ++j) {
    const std::size_t r = j + static_cast<std::size_t>(rng.below(n - j));
    std::swap(idx[j], idx[r]);
  }
  idx.resize(n_b);
  std::sort(idx.begin(), idx.end());
  return idx;
}

SampleField evaluate_field(const NetSpec& spec, std::span<const double> w, const Dataset& data,
                           KinkSelection ks) {
  NetEvaluator ev(spec);
  SampleField f;
  f.norm_w = norm2(w);
  f.u.assign(w.begin(), w.end());
  if (f.norm_w > 0.0)
    for (double& v : f.u) v /= f.norm_w;
  f.p_unit.resize(data.size());
  f.grad_unit.assign(data.size(), std::vector<double>(w.size(), 0.0));
  for (std::size_t i = 0; i < data.size(); ++i)
    f.p_unit[i] = ev.signed_output_and_grad(f.u, data.samples[i].x, data.samples[i].y, ks,
                                            f.grad_unit[i]);
  return f;
}

Direction batch_direction(const NetSpec& spec, const WeightVector& w, const Dataset& data,
                          const LossKind& loss, KinkSelection ks,
                          std::span<const std::size_t> indices) {
  if (w.shapes != spec.shapes()) throw DimensionError("weight shapes do not match the network");
  std::vector<std::size_t> all;
  if (indices.empty()) {
    all.resize(data.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    indices = all;
  }
  const SampleField f = evaluate_field(spec, w.data, data, ks);
  const double L = static_cast<double>(spec.depth());
  const double log_norm_factor = f.norm_w > 0.0 ? (L - 1.0) * std::log(f.norm_w) : 0.0;
  const double scale = f.norm_w > 0.0 ? std::pow(f.norm_w, L) : 1.0;

  std::vector<double> logc;
  for (std::size_t i : indices) {
    if (i >= data.size()) throw DimensionError("batch index out of range");
    logc.push_back(log_neg_deriv(loss, scale * f.p_unit[i]) + log_norm_factor);
  }
  const double m = *std::max_element(logc.begin(), logc.end());
  Direction out;
  out.unit.assign(w.size(), 0.0);
  if (m == kNegInf) return out;
  for (std::size_t j = 0; j < indices.size(); ++j)
    axpy(std::exp(logc[j] - m), f.grad_unit[indices[j]], out.unit);
  const double nrm = norm2(out.unit);
  if (nrm == 0.0) return out;
  for (double& v : out.unit) v /= nrm;
  out.log_scale = m + std::log(nrm) - std::log(static_cast<double>(indices.size()));
  return out;
}

Direction full_batch_direction(const NetSpec& spec, const WeightVector& w, const Dataset& data,
                               const LossKind& loss, KinkSelection ks) {
  return batch_direction(spec, w, data, loss, ks, {});
}

WeightVector initial_weights(const ExperimentConfig& config) {
  if (!config.init.weights.empty()) {
    WeightVector w(config.init.weights, config.spec.shapes());
    if (config.init.target_norm) {
      const double nrm = w.norm();
      if (nrm > 0.0)
        for (double& v : w.data) v *= *config.init.target_norm / nrm;
    }
    return w;
  }
  return init_weights(config.spec, config.seed,
                      InitOptions{config.init.scale, config.init.target_norm});
}

namespace {

// Full-batch diagnostics of w_k. `ev` and `u` are scratch space.
StepRecord make_record(std::uint64_t k, double gamma_k, std::span<const double> w,
                       const ExperimentConfig& cfg, const Dataset& data, NetEvaluator& ev,
                       std::vector<double>& u) {
  const double L = static_cast<double>(cfg.spec.depth());
  const std::size_t n = data.size();
  StepRecord rec;
  rec.k = k;
  rec.step_size = gamma_k;
  rec.norm_w = norm2(w);
  std::copy(w.begin(), w.end(), u.begin());
  const bool at_origin = rec.norm_w == 0.0;
  if (!at_origin)
    for (double& v : u) v /= rec.norm_w;
  const double scale = at_origin ? 1.0 : std::pow(rec.norm_w, L);

  std::vector<double> p(n), log_nd(n), log_l(n);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = data.samples[i].y * ev.forward(u, data.samples[i].x);
    const double pw = scale * p[i];
    log_nd[i] = log_neg_deriv(cfg.loss, pw);
    log_l[i] = log_loss_value(cfg.loss, pw);
  }
  std::vector<double> sorted = p;
  std::sort(sorted.begin(), sorted.end());
  rec.normalized_margin = sorted.front();
  rec.active_gap = n > 1 ? sorted[1] - sorted[0] : std::numeric_limits<double>::quiet_NaN();
  const double log_n = std::log(static_cast<double>(n));
  rec.log_loss = logsumexp(log_l) - log_n;
  rec.log_sum_neg_deriv = logsumexp(log_nd);
  if (at_origin) {
    rec.log_gamma_tilde = std::numeric_limits<double>::quiet_NaN();
    rec.log_gamma_bar = std::numeric_limits<double>::quiet_NaN();
  } else {
    const double log_norm = std::log(rec.norm_w);
    rec.log_gamma_tilde = std::log(gamma_k) - log_n + (L - 1.0) * log_norm + rec.log_sum_neg_deriv;
    rec.log_gamma_bar = rec.log_gamma_tilde - log_norm;
  }
  return rec;
}

}  // namespace

Trajectory run(const ExperimentConfig& config, const Dataset& data) {
  config.validate();
  data.validate();
  if (data.dim() != config.spec.input_dim())
    throw DimensionError("dataset has dimension " + std::to_string(data.dim()) +
                         ", network input expects " + std::to_string(config.spec.input_dim()));
  const std::size_t n = data.size();
  const std::size_t n_b = config.resolved_batch(n);
  const double L = static_cast<double>(config.spec.depth());

  Trajectory traj;
  traj.config = config;
  traj.n = n;

  WeightVector w = initial_weights(config);
  const std::size_t dim = w.size();
  std::vector<double> w_next(dim), step(dim), grad(dim), u(dim), scratch(dim);
  NetEvaluator ev(config.spec);
  Rng rng(derive_seed(config.seed, kBatchStream));
  std::vector<std::size_t> batch(n);
  std::iota(batch.begin(), batch.end(), std::size_t{0});

  auto abort = [&](const std::string& reason, std::uint64_t k) {
    traj.aborted = true;
    traj.abort_reason = reason;
    traj.final_weights = w.data;
    traj.k_sep = detect_separation(traj.records, config.separation_threshold,
                                   config.separation_persistence);
    throw NumericalAbort(traj.abort_reason, std::move(traj), k);
  };

  const std::uint64_t K = config.iterations;
  for (std::uint64_t k = 0; k < K; ++k) {
    const double gamma_k = config.gamma.at(k);
    if (n_b < n) batch = sample_batch(rng, n, n_b);

    const double norm_w = norm2(w.data);
    std::copy(w.data.begin(), w.data.end(), u.begin());
    if (norm_w > 0.0)
      for (double& v : u) v /= norm_w;
    const double scale = norm_w > 0.0 ? std::pow(norm_w, L) : 1.0;

    // ‖w‖^L can overflow while w itself is finite
    if (!std::isfinite(scale)) abort("output scale overflows at k = " + std::to_string(k), k);

    std::fill(step.begin(), step.end(), 0.0);
    for (std::size_t i : batch) {
      const Sample& s = data.samples[i];
      const double p_u = ev.signed_output_and_grad(u, s.x, s.y, config.kink, grad);
      const double c = gradient_coefficient(config.loss, scale * p_u, norm_w, L);
      if (c != 0.0) axpy(c, grad, step);
    }
    const double factor = gamma_k / static_cast<double>(n_b);
    for (std::size_t j = 0; j < dim; ++j) w_next[j] = w.data[j] + factor * step[j];

    const bool record = k % config.record_stride == 0 || k % config.snapshot_stride == 0;
    if (record) traj.records.push_back(make_record(k, gamma_k, w.data, config, data, ev, scratch));

    if (!all_finite(w_next)) abort("non-finite iterate at k = " + std::to_string(k + 1), k);
    if (k % config.snapshot_stride == 0) traj.snapshots.push_back({k, w.data, batch, w_next});
    w.data.swap(w_next);
  }
  if (!std::isfinite(std::pow(norm2(w.data), L)))
    abort("output scale overflows at k = " + std::to_string(K), K);
  traj.records.push_back(make_record(K, config.gamma.at(K), w.data, config, data, ev, scratch));
  traj.final_weights = w.data;
  traj.k_sep =
      detect_separation(traj.records, config.separation_threshold, config.separation_persistence);
  return traj;
}

std::optional<std::uint64_t> detect_separation(std::span<const StepRecord> records,
                                               double threshold, std::size_t persistence) {
  std::size_t run_start = 0;
  std::size_t run_len = 0;
  for (std::size_t j = 0; j < records.size(); ++j) {
    if (records[j].normalized_margin > threshold) {
      if (run_len == 0) run_start = j;
      if (++run_len > persistence) return records[run_start].k;
    } else {
      run_len = 0;
    }
  }
  return std::nullopt;
}

}  // namespace hbias
