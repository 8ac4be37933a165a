#pragma once

// Reparametrisation of (S)GD iterates in terms of their directions
// u_k = w_k / ‖w_k‖:
//
//   u_{k+1} = u_k + γ̄_k ḡ_k^s + γ̄_k η̄_{k+1} + γ̄_k^2 r_k
//
// with γ̄_k the effective step, ḡ_k^s the tangential part of the
// loss-weighted average of per-sample fields at u_k, η̄_{k+1} the projected
// minibatch noise and r_k the remainder. Everything that involves -l'(p_i)
// is formed from log(-l') so that it survives long runs.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hbias/criticality.hpp"
#include "hbias/datasets.hpp"
#include "hbias/losses.hpp"
#include "hbias/net.hpp"
#include "hbias/optimizer.hpp"

namespace hbias {

std::vector<double> normalize(std::span<const double> w);

// λ_i = l'(p_i(w)) / Σ_j l'(p_j(w)) with p_i(w) = scale · p_i(u).
std::vector<double> simplex_weights(const LossKind& loss, std::span<const double> p_unit,
                                    double scale);

struct EffectiveSteps {
  double log_gamma_tilde = 0.0;
  double log_gamma_bar = 0.0;
  double gamma_tilde() const;
  double gamma_bar() const;
};

// γ̃_k = -(γ_k / n) ‖w_k‖^{L-1} Σ_j l'(p_j(w_k)),  γ̄_k = γ̃_k / ‖w_k‖, where
// n = p_unit.size(); the 1/n matches the (1/n) Σ of the full-batch update.
EffectiveSteps effective_steps(double gamma_k, double norm_w, std::size_t depth,
                               const LossKind& loss, std::span<const double> p_unit);

struct AggregatedDirection {
  std::vector<double> g_bar;    // Σ λ_i g_i
  std::vector<double> g_bar_s;  // tangential part at u
};

AggregatedDirection aggregated_direction(const std::vector<std::vector<double>>& grads,
                                         std::span<const double> lambda,
                                         std::span<const double> u);

// r_k = (u_{k+1} - u_k - γ̄ ḡ^s - γ̄ η̄) / γ̄^2. Throws DomainError when γ̄ = 0.
std::vector<double> decompose_update(std::span<const double> u_k, std::span<const double> u_next,
                                     double gamma_bar, std::span<const double> g_bar_s,
                                     std::span<const double> eta_bar);
// Same with the increment u_{k+1} - u_k supplied directly.
std::vector<double> remainder_from_increment(std::span<const double> increment, double gamma_bar,
                                             std::span<const double> g_bar_s,
                                             std::span<const double> eta_bar);

// u_{k+1} - u_k from consecutive iterates without cancelling the norms.
std::vector<double> direction_increment(std::span<const double> w_k,
                                        std::span<const double> w_next);

// Projected minibatch noise η̄_{k+1} = P_u [ (n/n_b) Σ_{i∈B} λ_i g_i - Σ_i λ_i g_i ];
// zero for a full batch.
std::vector<double> noise_term(const NetSpec& spec, std::span<const double> w_k,
                               std::span<const std::size_t> batch, const Dataset& data,
                               const LossKind& loss, KinkSelection kink);

struct Window {
  std::uint64_t k_lo = 0;
  std::uint64_t k_hi = 0;
};

struct GrowthFit {
  double slope = 0.0;      // least-squares slope of ‖w_k‖^L on log k
  double intercept = 0.0;
  double c1_hat = 0.0;     // min over the window of ‖w_k‖^L / log k
  double c2_hat = 0.0;     // max over the window of ‖w_k‖^L / log k
  double r_squared = 0.0;
  Window window;
  std::size_t points = 0;
  bool growth_law_ok = false;  // positive slope
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;
};

LinearFit least_squares(std::span<const double> x, std::span<const double> y);

// Fits ‖w_k‖^L against log k over records with k in the window. The window
// must start at or after k_sep (DomainError otherwise, or when k_sep is empty).
GrowthFit fit_log_growth(std::span<const StepRecord> records, Window window, std::size_t depth,
                         std::optional<std::uint64_t> k_sep);

// Default window: last half of the post-separation records.
std::optional<Window> default_growth_window(std::span<const StepRecord> records,
                                            std::optional<std::uint64_t> k_sep);

struct EPrimeCondition {
  bool satisfied = false;
  double trend_slope = 0.0;  // slope of the monitored quantity against log k
  std::string detail;
};

struct EPrimeReport {
  Window window;
  EPrimeCondition norm_diverges;         // ‖w_k‖ -> ∞
  EPrimeCondition scaled_deriv_vanishes; // ‖w_k‖^{L-2} Σ -l'(p_i(w_k)) -> 0
  EPrimeCondition margin_above_q0;       // inf_k m(w_k) >= q0
};

// Checks the three conditions on the last half of the records.
EPrimeReport eprime_diagnostics(std::span<const StepRecord> records, std::size_t depth,
                                double q0 = 0.0);

struct DecompositionRecord {
  std::uint64_t k = 0;
  double norm_w = 0.0;
  double margin = 0.0;
  double gamma_bar = 0.0;
  double log_gamma_bar = 0.0;
  std::vector<double> lambda;
  std::vector<double> g_bar_s;
  std::vector<double> eta_bar;
  std::optional<std::vector<double>> r;  // empty when γ̄_k = 0
  double reconstruction_error = 0.0;     // ‖u_{k+1} - normalize(u_k + γ̄(ḡ + η̃))‖
  double tangency_g = 0.0;               // |<ḡ^s, u>| / max(‖ḡ^s‖, tiny)
  double tangency_eta = 0.0;
  double criticality = 0.0;              // dist(0, D̄_s(u_k))
  double field_gap = 0.0;                // dist(ḡ_k^s, D̄_s(u_k))
};

DecompositionRecord decompose_snapshot(const Trajectory& traj, const Snapshot& snap,
                                       const Dataset& data, double active_tol);

enum class ClaimStatus { Pass, Fail, NotApplicable };
std::string to_string(ClaimStatus s);

struct ClaimResult {
  ClaimStatus status = ClaimStatus::NotApplicable;
  std::string detail;
};

struct AnalysisOptions {
  double active_tol = kDefaultActiveTol;
  std::optional<Window> growth_window;
  std::size_t max_exhaustive_batches = 20000;
  std::size_t sampled_batches = 2000;
  double violation_fraction = 0.01;  // allowed share of γ̄ increases after k_sep
};

struct AnalysisSummary {
  std::optional<std::uint64_t> k_sep;
  std::optional<GrowthFit> growth;
  std::optional<LinearFit> log_loss_fit;  // log 𝓛 against log k on the growth window
  double min_window_margin = 0.0;
  ClaimResult claim1, claim2, claim3, claim4;
  ClaimResult loss_decay;
  // claim-2 ingredients
  double gamma_violation_fraction = 0.0;
  std::optional<LinearFit> gamma_power_fit;  // log γ̄ against log k
  double last_decade_sum = 0.0;
  double previous_decade_sum = 0.0;
  // claim-1 ingredients
  double remainder_first_quartile_max = 0.0;
  double remainder_last_quartile_max = 0.0;
  double max_reconstruction_error = 0.0;
  double max_tangency = 0.0;
  double final_margin = 0.0;
  double margin_oscillation = 0.0;  // max - min of m(u_k) over the last decade
  double final_residual = 0.0;
  std::optional<double> final_kkt_residual;
  EPrimeReport eprime;
  std::vector<DecompositionRecord> decomposition;
  std::vector<std::string> warnings;
};

AnalysisSummary analyze(const Trajectory& traj, const Dataset& data,
                        const AnalysisOptions& opts = {});

}  // namespace hbias
