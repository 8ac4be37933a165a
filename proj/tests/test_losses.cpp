#include <cmath>

#include "doctest.h"
#include "hbias/error.hpp"
#include "hbias/losses.hpp"

using namespace hbias;

TEST_CASE("loss values") {
  CHECK(loss_value(LossKind::exponential(), 0.0) == 1.0);
  CHECK(loss_value(LossKind::logistic(), 0.0) == doctest::Approx(std::log(2.0)));
  CHECK(loss_value(LossKind::exp_power(2.0), 3.0) == doctest::Approx(std::exp(-9.0)));
  CHECK(std::isfinite(loss_value(LossKind::logistic(), -50.0)));
  CHECK(loss_value(LossKind::logistic(), 1e9) >= 0.0);
  CHECK(log_loss_value(LossKind::exponential(), 1e9) == -1e9);
}

TEST_CASE("log of the negative derivative") {
  CHECK(log_neg_deriv(LossKind::exponential(), 2.0) == -2.0);
  CHECK(log_neg_deriv(LossKind::logistic(), 0.0) == doctest::Approx(std::log(0.5)));
  const double v = log_neg_deriv(LossKind::logistic(), 2.0);
  CHECK(std::exp(-2.0) / 2 <= std::exp(v));
  CHECK(std::exp(v) <= std::exp(-2.0));
  CHECK(std::isfinite(log_neg_deriv(LossKind::logistic(), 1e9)));
  CHECK_THROWS_AS(log_neg_deriv(LossKind::exponential(), std::nan("")), DomainError);
}

TEST_CASE("negative derivative in the linear domain") {
  CHECK(neg_deriv(LossKind::exponential(), 0.0) == 1.0);
  CHECK(neg_deriv(LossKind::logistic(), 0.0) == 0.5);
  CHECK(neg_deriv(LossKind::exponential(), 800.0) == 0.0);
  CHECK(log_neg_deriv(LossKind::exponential(), 800.0) == -800.0);
}

TEST_CASE("two-sided bound on a grid, in the log domain") {
  for (int i = 0; i < 10000; ++i) {
    const double q = 50.0 * i / 9999.0;
    for (const LossKind& k : {LossKind::exponential(), LossKind::logistic()}) {
      const double v = log_neg_deriv(k, q);
      CHECK(v <= -q);
      CHECK(v >= -q - std::log(2.0));
    }
  }
}

TEST_CASE("tail ratio vanishes for every variant") {
  for (const LossKind& k : {LossKind::exponential(), LossKind::logistic(), LossKind::exp_power(2.0),
                            LossKind::logistic_power(1.5)}) {
    const double lr = log_neg_deriv(k, 1e4) - log_neg_deriv(k, 0.9e4);
    CHECK(lr < -50.0);
  }
}

TEST_CASE("derivative matches finite differences of the loss") {
  for (const LossKind& k : {LossKind::exponential(), LossKind::logistic(), LossKind::exp_power(2.0),
                            LossKind::logistic_power(1.5)}) {
    for (double q = 0.1; q <= 30.0; q += 0.37) {
      const double h = 1e-6 * std::max(1.0, q);
      const double fd = (loss_value(k, q + h) - loss_value(k, q - h)) / (2 * h);
      const double nd = neg_deriv(k, q);
      if (nd < 1e-250) continue;
      CHECK(std::abs(-fd - nd) <= 1e-6 * nd + 1e-300);
    }
  }
}

TEST_CASE("loss names round-trip") {
  for (const char* name : {"exp", "logistic", "exp_pow:2", "logistic_pow:1.5"}) {
    CHECK(to_string(parse_loss(name)) == name);
  }
  CHECK_THROWS_AS(parse_loss("hinge"), ConfigError);
  CHECK_THROWS_AS(parse_loss("exp_pow:0.5"), ConfigError);
}
