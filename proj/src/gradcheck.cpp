#include "hbias/gradcheck.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "hbias/numeric.hpp"
#include "hbias/random.hpp"

namespace hbias {

GradCheckReport check_gradients(const NetSpec& spec, const GradCheckOptions& opts) {
  spec.validate();
  const std::size_t P = spec.num_params();
  const std::size_t d = spec.input_dim();
  const double L = static_cast<double>(spec.depth());
  const std::array<double, 3> lambdas = {0.5, 2.0, 10.0};
  Rng rng(derive_seed(opts.seed, 0x9c4e));
  NetEvaluator ev(spec);
  std::vector<double> w(P), x(d), g(P), gs(P), wp(P);
  GradCheckReport rep;
  const double lo = spec.activation.has_kink() ? spec.activation.kink_lo() : 1.0;
  const double hi = spec.activation.has_kink() ? spec.activation.kink_hi() : 1.0;

  for (std::size_t c = 0; c < opts.cases; ++c) {
    for (double& v : w) v = rng.normal();
    for (double& v : x) v = rng.normal();
    const double y = rng.uniform01() < 0.5 ? -1.0 : 1.0;
    const KinkSelection ks{rng.uniform(lo, hi)};
    const double p = ev.signed_output_and_grad(w, x, y, ks, g);
    if (opts.inject_fault) g[0] += 1e-3 * (1.0 + std::abs(g[0]));
    const double far = ev.min_abs_preactivation();

    rep.max_euler_error =
        std::max(rep.max_euler_error, std::abs(dot(g, w) - L * p) / std::max(1.0, std::abs(L * p)));

    // Φ(λw) = λ^L Φ(w) and a(λw) = λ^{L-1} a(w)
    const double gnorm = *std::max_element(g.begin(), g.end(), [](double a, double b) {
      return std::abs(a) < std::abs(b);
    });
    for (double lam : lambdas) {
      for (std::size_t j = 0; j < P; ++j) wp[j] = lam * w[j];
      const double ps = ev.signed_output_and_grad(wp, x, y, ks, gs);
      const double scale_p = std::pow(lam, L);
      const double scale_g = std::pow(lam, L - 1.0);
      double err = std::abs(ps - scale_p * p) / std::max(1.0, std::abs(scale_p * p));
      for (std::size_t j = 0; j < P; ++j)
        err = std::max(err, std::abs(gs[j] - scale_g * g[j]) /
                                std::max(1.0, scale_g * std::abs(gnorm)));
      rep.max_homogeneity_error = std::max(rep.max_homogeneity_error, err);
    }

    // central differences when every hidden pre-activation stays on one side
    const double h = 1e-6;
    if (far > 1e-3) {
      double err = 0.0;
      double gmax = 1.0;
      for (std::size_t j = 0; j < P; ++j) {
        wp = w;
        wp[j] = w[j] + h;
        const double fp = y * ev.forward(wp, x);
        wp[j] = w[j] - h;
        const double fm = y * ev.forward(wp, x);
        err = std::max(err, std::abs((fp - fm) / (2.0 * h) - g[j]));
        gmax = std::max(gmax, std::abs(g[j]));
      }
      rep.max_fd_error = std::max(rep.max_fd_error, err / gmax);
      ++rep.fd_cases;
    }
    ++rep.cases;
  }
  rep.passed = rep.max_euler_error <= opts.euler_tol &&
               rep.max_homogeneity_error <= opts.homogeneity_tol && rep.max_fd_error <= opts.fd_tol;
  return rep;
}

}  // namespace hbias
