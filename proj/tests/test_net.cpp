#include <cmath>
#include <vector>

#include "doctest.h"
#include "hbias/error.hpp"
#include "hbias/net.hpp"
#include "hbias/numeric.hpp"
#include "hbias/random.hpp"

using namespace hbias;

namespace {

NetSpec two_layer_relu() { return NetSpec::mlp({2, 2, 1}, Activation::relu()); }

// W1 = I, w2 = (1, -1)
WeightVector two_layer_weights(const NetSpec& spec, double scale = 1.0) {
  return WeightVector({scale, 0.0, 0.0, scale, scale, -scale}, spec.shapes());
}

}  // namespace

TEST_CASE("forward evaluates hand-computable networks") {
  const NetSpec lin = NetSpec::linear(2);
  const WeightVector w({1.0, 2.0}, lin.shapes());
  const std::vector<double> x = {3.0, 4.0};
  CHECK(forward(lin, w, x) == 11.0);

  const NetSpec net = two_layer_relu();
  const std::vector<double> x2 = {1.0, 2.0};
  CHECK(forward(net, two_layer_weights(net), x2) == -1.0);
  CHECK(forward(net, two_layer_weights(net, 2.0), x2) == -4.0);
}

TEST_CASE("forward reports the offending layer on a dimension mismatch") {
  const NetSpec net = two_layer_relu();
  const std::vector<double> bad_x = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(forward(net, two_layer_weights(net), bad_x), DimensionError);
  CHECK_THROWS_AS(WeightVector({1.0, 2.0}, net.shapes()), DimensionError);
  NetEvaluator ev(net);
  const std::vector<double> short_w = {1.0, 0.0, 0.0, 1.0, 1.0};
  const std::vector<double> x = {1.0, 2.0};
  try {
    ev.forward(short_w, x);
    FAIL("expected a dimension error");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("layer") != std::string::npos);
  }
}

TEST_CASE("net spec validation") {
  CHECK_THROWS_AS(NetSpec::mlp({2, 3, 2}, Activation::relu()).validate(), ConfigError);
  CHECK_THROWS_AS(NetSpec::mlp({2}, Activation::relu()).validate(), ConfigError);
  CHECK_THROWS_AS(NetSpec::mlp({2, 0, 1}, Activation::relu()).validate(), ConfigError);
  CHECK(NetSpec::mlp({3, 5, 4, 1}, Activation::relu()).depth() == 3);
  CHECK(NetSpec::mlp({3, 5, 4, 1}, Activation::relu()).num_params() == 15 + 20 + 4);
}

TEST_CASE("signed output is y times forward") {
  const NetSpec net = two_layer_relu();
  const WeightVector w = two_layer_weights(net);
  CHECK(signed_output(net, w, Sample{{1.0, 2.0}, -1.0}) == 1.0);
  const NetSpec lin = NetSpec::linear(1);
  CHECK(signed_output(lin, WeightVector({3.0}, lin.shapes()), Sample{{1.0}, 1.0}) == 3.0);
  CHECK(signed_output(lin, WeightVector({0.0}, lin.shapes()), Sample{{1.0}, -1.0}) == 0.0);
}

TEST_CASE("conservative gradient examples") {
  const NetSpec lin = NetSpec::linear(2);
  const WeightVector g = conservative_grad(lin, WeightVector({1.0, 2.0}, lin.shapes()),
                                          Sample{{3.0, 4.0}, 1.0}, KinkSelection{0.0});
  CHECK(g.data == std::vector<double>{3.0, 4.0});

  // Φ(x; w) = relu(w x) written as the 1-1-1 net with a unit output weight
  const NetSpec one = NetSpec::mlp({1, 1, 1}, Activation::relu());
  const WeightVector w({0.0, 1.0}, one.shapes());
  const WeightVector g1 = conservative_grad(one, w, Sample{{1.0}, 1.0}, KinkSelection{0.3});
  CHECK(g1.data[0] == doctest::Approx(0.3));
  CHECK(g1.data[1] == 0.0);  // relu(0) = 0
}

TEST_CASE("kink selection must lie in the subdifferential") {
  CHECK_NOTHROW(validate_kink(Activation::relu(), KinkSelection{0.5}));
  CHECK_THROWS_AS(validate_kink(Activation::relu(), KinkSelection{1.5}), ConfigError);
  CHECK_THROWS_AS(validate_kink(Activation::leaky_relu(0.1), KinkSelection{0.05}), ConfigError);
  CHECK(default_kink(Activation::leaky_relu(0.1)).e == 0.1);
}

TEST_CASE("Euler identity, field homogeneity and finite differences on random deep nets") {
  Rng rng(123);
  const std::vector<double> lambdas = {0.5, 2.0, 10.0};
  for (int c = 0; c < 50; ++c) {
    const NetSpec spec = NetSpec::mlp({3, 4, 5, 1}, c % 2 ? Activation::relu()
                                                          : Activation::leaky_relu(0.2));
    NetEvaluator ev(spec);
    std::vector<double> w(spec.num_params()), x(3), g(w.size()), gl(w.size()), wp(w.size());
    for (double& v : w) v = rng.normal();
    for (double& v : x) v = rng.normal();
    const KinkSelection ks{spec.activation.kink_lo()};
    const double p = ev.signed_output_and_grad(w, x, 1.0, ks, g);
    CHECK(std::abs(dot(g, w) - 3.0 * p) <= 1e-10 * (1.0 + std::abs(3.0 * p)));

    for (double lam : lambdas) {
      for (std::size_t j = 0; j < w.size(); ++j) wp[j] = lam * w[j];
      ev.signed_output_and_grad(wp, x, 1.0, ks, gl);
      double diff = 0.0;
      for (std::size_t j = 0; j < w.size(); ++j) diff += std::pow(gl[j] - lam * lam * g[j], 2);
      CHECK(std::sqrt(diff) <= 1e-9 * lam * lam * norm2(g));
    }
    CHECK(homogeneity_check(spec, WeightVector(w, spec.shapes()), x, lambdas) <= 1e-12);

    if (ev.signed_output_and_grad(w, x, 1.0, ks, g), ev.min_abs_preactivation() > 1e-3) {
      const double h = 1e-6 * (1.0 + norm2(w));
      for (std::size_t j = 0; j < w.size(); ++j) {
        wp = w;
        wp[j] += h;
        const double fp = ev.forward(wp, x);
        wp[j] -= 2 * h;
        const double fm = ev.forward(wp, x);
        CHECK(std::abs((fp - fm) / (2 * h) - g[j]) <= 1e-5 * std::max(1.0, norm2(g)));
      }
    }
  }
}

TEST_CASE("zero sites and per-site kink overrides") {
  const NetSpec net = NetSpec::mlp({1, 2, 1}, Activation::relu());
  // both hidden pre-activations vanish at x = 1
  const std::vector<double> w = {0.0, 0.0, 1.0, 1.0};
  const std::vector<double> x = {1.0};
  NetEvaluator ev(net);
  std::vector<double> g(4);
  ev.signed_output_and_grad(w, x, 1.0, KinkSelection{0.0}, g);
  CHECK(ev.zero_sites().size() == 2);
  const std::vector<double> over = {1.0, 0.0};
  ev.signed_output_and_grad(w, x, 1.0, KinkSelection{0.0}, g, over);
  CHECK(g == std::vector<double>{1.0, 0.0, 0.0, 0.0});
  const std::vector<double> wrong = {1.0};
  CHECK_THROWS(ev.signed_output_and_grad(w, x, 1.0, KinkSelection{0.0}, g, wrong));
}

TEST_CASE("output bound holds on the unit sphere") {
  Rng rng(5);
  for (const auto& widths : {std::vector<std::size_t>{3, 1}, {3, 6, 1}, {3, 4, 4, 1}}) {
    const NetSpec spec = NetSpec::mlp(widths, Activation::relu());
    for (int c = 0; c < 200; ++c) {
      std::vector<double> w(spec.num_params()), x(3);
      for (double& v : w) v = rng.normal();
      for (double& v : x) v = rng.normal();
      const double nw = norm2(w);
      for (double& v : w) v /= nw;
      NetEvaluator ev(spec);
      CHECK(std::abs(ev.forward(w, x)) <= output_bound(spec, norm2(x)) * (1 + 1e-12));
    }
  }
}

TEST_CASE("initialisation is seeded and honours the target norm") {
  const NetSpec spec = NetSpec::mlp({2, 8, 1}, Activation::relu());
  const WeightVector a = init_weights(spec, 9, InitOptions{0.5, std::nullopt});
  const WeightVector b = init_weights(spec, 9, InitOptions{0.5, std::nullopt});
  CHECK(a.data == b.data);
  for (double v : a.data) CHECK(std::abs(v) <= 0.5);
  const WeightVector c = init_weights(spec, 9, InitOptions{0.5, 3.0});
  CHECK(c.norm() == doctest::Approx(3.0).epsilon(1e-14));
}
