#pragma once

// Criticality of directions for the margin m(w) = min_i p_i(w) restricted to
// the unit sphere. The margin's field at u is the convex hull of the active
// samples' fields, its spherical version projects every generator onto the
// tangent space at u, and u is critical when that hull contains 0.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hbias/datasets.hpp"
#include "hbias/net.hpp"

namespace hbias {

inline constexpr double kDefaultActiveTol = 1e-6;
inline constexpr std::size_t kMaxEnumeratedKinks = 8;

struct ActiveSet {
  std::vector<std::size_t> indices;
  double tol = 0.0;
  double margin = 0.0;
};

// Indices with p_i <= min + tol (1 + |min|).
ActiveSet active_set(std::span<const double> p_values, double tol);

struct GeneratorSet {
  std::vector<std::vector<double>> vectors;
  std::vector<std::size_t> owner;  // sample index of each generator
  // Some active sample had more than kMaxEnumeratedKinks zero pre-activations
  // and contributed only its configured selection.
  bool under_approximated = false;
};

// Conservative-field generators of the active samples at w, unprojected. With
// enumerate_kinks, a sample with exactly-zero pre-activations contributes one
// generator per extreme selection (kink_lo / kink_hi at every zero site).
GeneratorSet margin_field_generators(const NetSpec& spec, std::span<const double> w,
                                     const Dataset& data, const ActiveSet& active,
                                     KinkSelection kink, bool enumerate_kinks);

// Same generators at a unit vector u, projected onto the tangent space at u.
GeneratorSet spherical_generators(const NetSpec& spec, std::span<const double> u,
                                  const Dataset& data, const ActiveSet& active, KinkSelection kink,
                                  bool enumerate_kinks);

struct MinNormResult {
  std::vector<double> point;
  std::vector<double> weights;  // convex coefficients, one per generator
  double norm = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
};

// Wolfe's minimum-norm-point algorithm over conv(generators).
MinNormResult min_norm_in_hull(const std::vector<std::vector<double>>& generators,
                               double tol = 1e-12);

// Distance from `point` to conv(generators).
double distance_to_hull(std::span<const double> point,
                        const std::vector<std::vector<double>>& generators);

struct CriticalityReport {
  ActiveSet active;
  std::vector<std::vector<double>> generators;
  std::vector<std::size_t> generator_owner;
  std::vector<double> min_norm_point;
  double residual = 0.0;
  std::vector<double> hull_weights;
  std::optional<double> kkt_residual;
  bool converged = false;
  bool under_approximated = false;
  // "exact", "certified_critical" or "upper_bound"
  std::string certificate;
  // Description of the field used for every D_i.
  std::string field;
};

struct CriticalityOptions {
  double tol = kDefaultActiveTol;
  bool enumerate_kinks = true;
  bool with_kkt = true;  // only evaluated when the margin is positive
};

CriticalityReport criticality_residual(const NetSpec& spec, std::span<const double> w,
                                       const Dataset& data, KinkSelection kink,
                                       const CriticalityOptions& opts = {});

// ‖w* - Σ α_i v_i‖ minimised over α >= 0 supported on the active set, with
// w* = u / m(u)^{1/L} and v_i the sample fields at w*. Requires m(w) > 0.
double kkt_residual(const NetSpec& spec, std::span<const double> w, const Dataset& data,
                    double tol, KinkSelection kink, bool enumerate_kinks = true);

// Signed outputs p_i(u) of every sample.
std::vector<double> signed_outputs(const NetSpec& spec, std::span<const double> w,
                                   const Dataset& data);
double margin(const NetSpec& spec, std::span<const double> w, const Dataset& data);

struct FlowOptions {
  double active_tol = kDefaultActiveTol;
  bool enumerate_kinks = false;
  std::size_t max_steps = 0;  // 0: derived from horizon / step
};

struct FlowPoint {
  double t = 0.0;
  std::vector<double> u;
  double margin = 0.0;
  double residual = 0.0;
  double step = 0.0;  // step length that produced this point (0 for the start)
};

struct FlowResult {
  std::vector<FlowPoint> path;
  bool converged = false;        // residual dropped below tol
  double final_residual = 0.0;
  std::size_t rejected_steps = 0;
};

// Forward-Euler discretisation of u' ∈ D̄_s(u) with the minimum-norm selection
// over the samples within active_tol (1 + |m|) of the margin. A step is cut at
// the first point where an inactive sample is predicted to join the margin
// (exact for linear predictors) and halved while it would lower the margin.
FlowResult euler_di_flow(const NetSpec& spec, std::span<const double> u0, const Dataset& data,
                         double step, double horizon, double tol, KinkSelection kink,
                         const FlowOptions& opts = {});

}  // namespace hbias
