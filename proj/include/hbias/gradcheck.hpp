#pragma once

// Randomised self-test of the network's backward pass: Euler identity,
// homogeneity of output and field, and central finite differences away
// from kinks.

#include <cstdint>

#include "hbias/net.hpp"

namespace hbias {

struct GradCheckOptions {
  std::size_t cases = 200;
  std::uint64_t seed = 0;
  double euler_tol = 1e-9;
  double homogeneity_tol = 1e-9;
  double fd_tol = 1e-5;
  // Test hook: perturbs the first gradient entry so that the check must fail.
  bool inject_fault = false;
};

struct GradCheckReport {
  std::size_t cases = 0;
  std::size_t fd_cases = 0;        // cases far enough from every kink for finite differences
  double max_euler_error = 0.0;    // |<a, w> - L p| / max(1, |L p|)
  double max_homogeneity_error = 0.0;
  double max_fd_error = 0.0;       // ‖a - a_fd‖_∞ / max(1, ‖a‖_∞)
  bool passed = false;
};

GradCheckReport check_gradients(const NetSpec& spec, const GradCheckOptions& opts);

}  // namespace hbias
