#pragma once

// Constant-step (and vanishing-step) subgradient descent on the empirical
// risk (1/n) Σ_i l(p_i(w)), full batch or uniform minibatches.

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hbias/datasets.hpp"
#include "hbias/losses.hpp"
#include "hbias/net.hpp"
#include "hbias/random.hpp"

namespace hbias {

struct StepSchedule {
  enum class Kind { Constant, Power };
  Kind kind = Kind::Constant;
  double gamma0 = 0.1;
  double beta = 1.0;  // Power only, γ_k = gamma0 / (k + 1)^beta

  double at(std::uint64_t k) const;
  void validate() const;

  static StepSchedule constant(double gamma) { return {Kind::Constant, gamma, 0.0}; }
  static StepSchedule power(double gamma0, double beta) { return {Kind::Power, gamma0, beta}; }
};

struct InitSpec {
  double scale = 0.1;
  std::optional<double> target_norm;
  std::vector<double> weights;  // explicit w_0 when nonempty
};

struct ExperimentConfig {
  NetSpec spec;
  LossKind loss;
  StepSchedule gamma;
  std::optional<std::size_t> batch_size;  // empty: full batch (GD)
  std::uint64_t iterations = 1000;
  std::uint64_t seed = 0;
  KinkSelection kink;
  std::uint64_t record_stride = 1;
  std::uint64_t snapshot_stride = 1000;
  InitSpec init;
  double separation_threshold = 1e-6;
  std::size_t separation_persistence = 10;

  // Checks everything that does not depend on the dataset.
  void validate() const;
  // Resolved batch size for a dataset of n samples; ConfigError if out of range.
  std::size_t resolved_batch(std::size_t n) const;
};

struct StepRecord {
  std::uint64_t k = 0;
  double step_size = 0.0;           // γ_k
  double norm_w = 0.0;              // ‖w_k‖
  double normalized_margin = 0.0;   // 𝔪(u_k)
  double log_loss = 0.0;            // log 𝓛(w_k)
  double log_gamma_tilde = 0.0;     // log γ̃_k (-inf when γ̃_k = 0)
  double log_gamma_bar = 0.0;       // log γ̄_k
  double active_gap = 0.0;          // second smallest minus smallest p_i(u_k)
  double log_sum_neg_deriv = 0.0;   // log Σ_j -l'(p_j(w_k))

  double gamma_tilde() const;
  double gamma_bar() const;
};

struct Snapshot {
  std::uint64_t k = 0;
  std::vector<double> w;                // w_k
  std::vector<std::size_t> batch;       // B_k, sorted
  std::vector<double> w_next;           // w_{k+1}
};

struct Trajectory {
  ExperimentConfig config;
  std::size_t n = 0;                    // dataset size
  std::vector<StepRecord> records;
  std::vector<Snapshot> snapshots;
  std::optional<std::uint64_t> k_sep;
  std::vector<double> final_weights;    // w_K
  bool aborted = false;
  std::string abort_reason;

  double final_margin() const;
  const Snapshot* snapshot_at(std::uint64_t k) const;
};

// Thrown by run() when an iterate stops being finite. Carries the partial
// trajectory whose final_weights hold the last finite state.
class NumericalAbort : public std::exception {
 public:
  NumericalAbort(std::string what, Trajectory partial, std::uint64_t last_finite_k)
      : what_(std::move(what)), partial_(std::move(partial)), last_finite_k_(last_finite_k) {}
  const char* what() const noexcept override { return what_.c_str(); }
  const Trajectory& partial() const { return partial_; }
  std::uint64_t last_finite_k() const { return last_finite_k_; }

 private:
  std::string what_;
  Trajectory partial_;
  std::uint64_t last_finite_k_;
};

// Uniform n_b-subset of {0, ..., n-1} by partial Fisher-Yates, returned sorted.
std::vector<std::size_t> sample_batch(Rng& rng, std::size_t n, std::size_t n_b);

// Per-sample signed outputs and conservative gradients evaluated at the
// unit direction u = w/‖w‖ (or at w itself when w = 0).
struct SampleField {
  double norm_w = 0.0;
  std::vector<double> u;
  std::vector<double> p_unit;                  // p_i(u)
  std::vector<std::vector<double>> grad_unit;  // 𝔰a_i(u)
};

SampleField evaluate_field(const NetSpec& spec, std::span<const double> w, const Dataset& data,
                           KinkSelection ks);

struct Direction {
  std::vector<double> unit;  // zero vector when the direction vanishes
  double log_scale = -std::numeric_limits<double>::infinity();
};

// -(1/|S|) Σ_{i∈S} l'(p_i(w)) 𝔰a_i(w) over the given index set (all samples
// when indices is empty), in factored form unit * exp(log_scale).
Direction batch_direction(const NetSpec& spec, const WeightVector& w, const Dataset& data,
                          const LossKind& loss, KinkSelection ks,
                          std::span<const std::size_t> indices);
Direction full_batch_direction(const NetSpec& spec, const WeightVector& w, const Dataset& data,
                               const LossKind& loss, KinkSelection ks);

// Initial iterate from the config (explicit weights or seeded uniform init).
WeightVector initial_weights(const ExperimentConfig& config);

Trajectory run(const ExperimentConfig& config, const Dataset& data);

// First recorded k with 𝔪(u_k) > threshold that stays above it for the
// following `persistence` records.
std::optional<std::uint64_t> detect_separation(std::span<const StepRecord> records,
                                               double threshold, std::size_t persistence);

}  // namespace hbias
