#include <cmath>
#include <vector>

#include "doctest.h"
#include "hbias/datasets.hpp"
#include "hbias/dynamics.hpp"
#include "hbias/error.hpp"
#include "hbias/numeric.hpp"
#include "hbias/random.hpp"

using namespace hbias;

namespace {

ExperimentConfig base_config(const NetSpec& spec, double gamma, std::uint64_t iters) {
  ExperimentConfig c;
  c.spec = spec;
  c.loss = LossKind::exponential();
  c.gamma = StepSchedule::constant(gamma);
  c.iterations = iters;
  c.kink = default_kink(spec.activation);
  return c;
}

std::vector<StepRecord> synthetic(std::uint64_t k0, std::uint64_t k1, auto norm_of_k) {
  std::vector<StepRecord> r;
  for (std::uint64_t k = k0; k <= k1; k += 10) {
    StepRecord s;
    s.k = k;
    s.norm_w = norm_of_k(k);
    s.normalized_margin = 0.5;
    r.push_back(s);
  }
  return r;
}

}  // namespace

TEST_CASE("normalize") {
  const auto u = normalize(std::vector<double>{3.0, 4.0});
  CHECK(u[0] == doctest::Approx(0.6));
  CHECK(u[1] == doctest::Approx(0.8));
  const std::vector<double> e = {0.0, 1.0};
  CHECK(normalize(e) == e);
  CHECK_THROWS_AS(normalize(std::vector<double>{0.0, 0.0}), DomainError);
}

TEST_CASE("simplex weights") {
  const auto a = simplex_weights(LossKind::exponential(), std::vector<double>{0.7, 0.7}, 3.0);
  CHECK(a[0] == doctest::Approx(0.5));
  CHECK(a[1] == doctest::Approx(0.5));
  const auto b = simplex_weights(LossKind::exponential(), std::vector<double>{0.5, 0.6}, 1000.0);
  CHECK(b[0] == doctest::Approx(1.0));
  CHECK(std::log(b[1]) == doctest::Approx(-100.0).epsilon(1e-12));
  const auto c = simplex_weights(LossKind::logistic(), std::vector<double>{0.0, 0.0, 0.0}, 1.0);
  for (double v : c) CHECK(v == doctest::Approx(1.0 / 3.0));
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> p(7);
    for (double& v : p) v = rng.uniform(-1, 1);
    const auto l = simplex_weights(LossKind::logistic(), p, rng.uniform(0.1, 1e6));
    double s = 0.0;
    for (double v : l) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("effective steps") {
  const double q = std::log(2.0);  // -l'(q) = 0.5 for the exponential loss
  const EffectiveSteps e =
      effective_steps(0.1, 2.0, 2, LossKind::exponential(), std::vector<double>{q / 4.0});
  CHECK(e.gamma_tilde() == doctest::Approx(0.1));
  CHECK(e.gamma_bar() == doctest::Approx(0.05));

  // -l' vanishes for exp_pow at q = 0
  const EffectiveSteps z =
      effective_steps(0.1, 2.0, 2, LossKind::exp_power(2.0), std::vector<double>{0.0});
  CHECK(z.gamma_bar() == 0.0);

  // γ̄ <= γ ‖w‖^{L-2} exp(-ε ‖w‖^L) when every p_i(u) >= ε
  Rng rng(8);
  for (int t = 0; t < 100; ++t) {
    const double eps = rng.uniform(0.01, 0.5);
    const double nw = rng.uniform(1.0, 40.0);
    const std::size_t L = 1 + rng.below(3);
    std::vector<double> p(5);
    for (double& v : p) v = eps + rng.uniform(0.0, 0.3);
    const double gamma = 0.1;
    const EffectiveSteps s = effective_steps(gamma, nw, L, LossKind::exponential(), p);
    const double log_bound = std::log(gamma) + (double(L) - 2.0) * std::log(nw) - eps * std::pow(nw, L);
    CHECK(s.log_gamma_bar <= log_bound + 1e-12);
  }
}

TEST_CASE("aggregated direction") {
  const std::vector<double> u = {1.0, 0.0};
  const auto one = aggregated_direction({{2.0, 3.0}}, std::vector<double>{1.0}, u);
  CHECK(one.g_bar == std::vector<double>{2.0, 3.0});
  CHECK(one.g_bar_s == std::vector<double>{0.0, 3.0});
  const auto radial = aggregated_direction({{5.0, 0.0}, {1.0, 0.0}}, std::vector<double>{0.5, 0.5}, u);
  CHECK(norm2(radial.g_bar_s) == 0.0);
  CHECK_THROWS_AS(aggregated_direction({{1.0, 0.0}}, std::vector<double>{0.5, 0.5}, u),
                  DimensionError);
}

TEST_CASE("remainder of manufactured updates") {
  const std::vector<double> u = {0.6, 0.8};
  const std::vector<double> gs = {-0.8, 0.6};
  const std::vector<double> eta = {0.0, 0.0};
  const double gb = 0.01;
  std::vector<double> next = {u[0] + gb * gs[0], u[1] + gb * gs[1]};
  auto r = decompose_update(u, next, gb, gs, eta);
  CHECK(norm2(r) <= 1e-10);
  const std::vector<double> v = {0.3, -0.2};
  for (int j = 0; j < 2; ++j) next[j] += gb * gb * v[j];
  r = decompose_update(u, next, gb, gs, eta);
  CHECK(r[0] == doctest::Approx(0.3).epsilon(1e-9));
  CHECK(r[1] == doctest::Approx(-0.2).epsilon(1e-9));
  CHECK_THROWS_AS(decompose_update(u, next, 0.0, gs, eta), DomainError);
}

TEST_CASE("remainder of single-sample linear GD matches the closed form") {
  Dataset data;
  data.samples = {Sample{{1.0, 0.3}, 1.0}};
  ExperimentConfig c = base_config(NetSpec::linear(2), 0.5, 40);
  c.init.weights = {0.2, 1.0};
  c.snapshot_stride = 1;
  const Trajectory t = run(c, data);
  for (const Snapshot& s : t.snapshots) {
    const DecompositionRecord d = decompose_snapshot(t, s, data, kDefaultActiveTol);
    REQUIRE(d.r.has_value());
    // u_{k+1} = (u + γ̄ g) / n with g the (unprojected) field, n = ‖u + γ̄ g‖
    const std::vector<double> u = normalize(s.w);
    const std::vector<double> g = {1.0, 0.3};
    const double gb = d.gamma_bar;
    const double a = dot(g, u);
    const std::vector<double> gsv = {g[0] - a * u[0], g[1] - a * u[1]};
    const double s2 = dot(gsv, gsv);
    const double n = std::sqrt((1 + gb * a) * (1 + gb * a) + gb * gb * s2);
    const double cu = -s2 / (n * (1 + gb * a + n));
    const double cs = -(2 * a + gb * (a * a + s2)) / (n * (1 + n));
    for (int j = 0; j < 2; ++j) {
      const double expect = cu * u[j] + cs * gsv[j];
      CHECK(std::abs((*d.r)[j] - expect) <= 1e-10 * std::max(1.0, std::abs(expect)));
    }
  }
}

TEST_CASE("noise term") {
  const Dataset data = gen_linear_separable(4, 4, 2, 0.2, 1.0);
  const NetSpec spec = NetSpec::mlp({2, 3, 1}, Activation::relu());
  const WeightVector w = init_weights(spec, 1, InitOptions{1.0, std::nullopt});
  const std::vector<std::size_t> all = {0, 1, 2, 3};
  CHECK(norm2(noise_term(spec, w.data, all, data, LossKind::exponential(), KinkSelection{})) == 0.0);

  Dataset twins;
  twins.samples = {Sample{{0.4, 1.0}, 1.0}, Sample{{0.4, 1.0}, 1.0}};
  const std::vector<std::size_t> first = {0};
  CHECK(norm2(noise_term(spec, w.data, first, twins, LossKind::exponential(), KinkSelection{})) == 0.0);

  std::vector<double> mean(w.data.size(), 0.0);
  double ref = 0.0;
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = a + 1; b < 4; ++b) {
      const std::vector<std::size_t> idx = {a, b};
      const auto e = noise_term(spec, w.data, idx, data, LossKind::exponential(), KinkSelection{});
      axpy(1.0 / 6.0, e, mean);
      ref = std::max(ref, norm2(e));
      CHECK(std::abs(dot(e, normalize(w.data))) <= 1e-9 * std::max(norm2(e), 1e-300));
    }
  CHECK(norm2(mean) <= 1e-12 * std::max(ref, 1.0));
}

TEST_CASE("log-growth fit") {
  const auto exact = synthetic(1000, 100000, [](std::uint64_t k) { return 3.0 * std::log(double(k)); });
  const GrowthFit f = fit_log_growth(exact, Window{1000, 100000}, 1, 10);
  CHECK(f.slope == doctest::Approx(3.0));
  CHECK(f.c1_hat == doctest::Approx(3.0));
  CHECK(f.c2_hat == doctest::Approx(3.0));
  CHECK(f.r_squared == doctest::Approx(1.0));
  CHECK(f.growth_law_ok);

  Rng rng(17);
  const auto noisy = synthetic(1000, 100000, [&](std::uint64_t k) {
    return 3.0 * std::log(double(k)) + rng.uniform(-0.01, 0.01);
  });
  const GrowthFit g = fit_log_growth(noisy, Window{1000, 100000}, 1, 10);
  CHECK(std::abs(g.c1_hat - 3.0) <= 0.05);
  CHECK(std::abs(g.slope - 3.0) <= 0.05);
  CHECK(g.r_squared >= 0.99);

  const auto flat = synthetic(1000, 100000, [](std::uint64_t) { return 5.0; });
  const GrowthFit h = fit_log_growth(flat, Window{1000, 100000}, 1, 10);
  CHECK(h.slope == doctest::Approx(0.0));
  CHECK_FALSE(h.growth_law_ok);

  CHECK_THROWS_AS(fit_log_growth(exact, Window{1000, 100000}, 1, 5000), DomainError);
  CHECK_THROWS_AS(fit_log_growth(exact, Window{1000, 100000}, 1, std::nullopt), DomainError);
}

TEST_CASE("relaxed-event diagnostics") {
  // L = 1, exponential loss: log Σ -l' = -‖w‖ m
  auto make = [](auto norm_of_k, auto lsnd_of_k) {
    std::vector<StepRecord> r;
    for (std::uint64_t k = 1; k <= 10000; k += 10) {
      StepRecord s;
      s.k = k;
      s.norm_w = norm_of_k(k);
      s.normalized_margin = 0.3;
      s.log_sum_neg_deriv = lsnd_of_k(k, s.norm_w);
      r.push_back(s);
    }
    return r;
  };
  const auto good = make([](std::uint64_t k) { return 1.0 + std::log(double(k)); },
                         [](std::uint64_t, double nw) { return -0.3 * nw; });
  const EPrimeReport a = eprime_diagnostics(good, 1);
  CHECK(a.norm_diverges.satisfied);
  CHECK(a.scaled_deriv_vanishes.satisfied);
  CHECK(a.margin_above_q0.satisfied);

  const auto diverging = make([](std::uint64_t k) { return 1.0 + std::log(double(k)); },
                              [](std::uint64_t k, double) { return 0.001 * double(k); });
  CHECK_FALSE(eprime_diagnostics(diverging, 1).scaled_deriv_vanishes.satisfied);

  const auto frozen = make([](std::uint64_t) { return 2.0; },
                           [](std::uint64_t, double) { return -0.6; });
  CHECK_FALSE(eprime_diagnostics(frozen, 1).norm_diverges.satisfied);
}

TEST_CASE("reconstruction identity, tangency and simplex on recorded runs") {
  const Dataset data = gen_linear_separable(2, 12, 2, 0.2, 1.0);
  for (std::optional<std::size_t> nb : {std::optional<std::size_t>{}, std::optional<std::size_t>{6}}) {
    ExperimentConfig c = base_config(NetSpec::mlp({2, 6, 1}, Activation::relu()), 0.1, 4000);
    c.batch_size = nb;
    c.snapshot_stride = 97;
    c.init.scale = 0.5;
    c.seed = 3;
    const Trajectory t = run(c, data);
    REQUIRE(t.snapshots.size() > 10);
    for (const Snapshot& s : t.snapshots) {
      const DecompositionRecord d = decompose_snapshot(t, s, data, kDefaultActiveTol);
      CHECK(d.reconstruction_error <= 1e-9);
      CHECK(d.tangency_g <= 1e-9);
      CHECK(d.tangency_eta <= 1e-9);
      double sum = 0.0;
      for (double v : d.lambda) {
        CHECK(v >= 0.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-12);
      if (!nb) CHECK(norm2(d.eta_bar) == 0.0);
    }
  }
}

TEST_CASE("analysis without separation reports claims as not applicable") {
  Dataset data;
  data.samples = {Sample{{1.0, 0.0}, 1.0}, Sample{{1.0, 0.0}, -1.0}};
  ExperimentConfig c = base_config(NetSpec::linear(2), 0.1, 200);
  c.snapshot_stride = 20;
  const Trajectory t = run(c, data);
  CHECK_FALSE(t.k_sep.has_value());
  const AnalysisSummary s = analyze(t, data);
  for (const ClaimResult* r : {&s.claim1, &s.claim2, &s.claim4}) {
    CHECK(r->status == ClaimStatus::NotApplicable);
    CHECK(r->detail == "not applicable (no separation detected)");
  }
}

TEST_CASE("analysis of a separable linear run") {
  const Dataset data = gen_linear_separable(0, 20, 2, 0.3, 1.0);
  ExperimentConfig c = base_config(NetSpec::linear(2), 0.5, 100000);
  c.record_stride = 100;
  c.snapshot_stride = 2000;
  const Trajectory t = run(c, data);
  const AnalysisSummary s = analyze(t, data);
  REQUIRE(s.growth.has_value());
  CHECK(s.growth->r_squared >= 0.99);
  CHECK(s.growth->slope > 0.0);
  CHECK(s.claim1.status == ClaimStatus::Pass);
  CHECK(s.claim2.status == ClaimStatus::Pass);
  CHECK(s.claim3.status == ClaimStatus::Pass);
  CHECK(s.loss_decay.status == ClaimStatus::Pass);
  CHECK(s.max_reconstruction_error <= 1e-9);
  CHECK(s.final_margin > 0.0);
}

TEST_CASE("sampled noise check for large batch counts") {
  const Dataset data = gen_linear_separable(6, 30, 2, 0.2, 1.0);
  ExperimentConfig c = base_config(NetSpec::linear(2), 0.1, 2000);
  c.batch_size = 15;  // C(30, 15) > 20000: sampled
  c.snapshot_stride = 500;
  const Trajectory t = run(c, data);
  const AnalysisSummary s = analyze(t, data);
  CHECK(s.claim3.status == ClaimStatus::Pass);
}
