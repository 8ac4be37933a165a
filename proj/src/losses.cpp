#include "hbias/losses.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <limits>

#include "hbias/error.hpp"

namespace hbias {

namespace {

// Power variants use the odd extension ψ(q) = sign(q)|q|^a so that l stays
// decreasing on the whole line.
double psi(double q, double a) {
  if (a == 1.0) return q;
  const double m = std::pow(std::abs(q), a);
  return q < 0.0 ? -m : m;
}

// log(a |q|^{a-1}), the log of ψ'(q).
double log_psi_prime(double q, double a) {
  if (a == 1.0) return 0.0;
  if (q == 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(a) + (a - 1.0) * std::log(std::abs(q));
}

void check_finite(double q) {
  if (!std::isfinite(q)) throw DomainError("loss argument is not finite");
}

}  // namespace

LossKind LossKind::exp_power(double a) {
  if (!(a >= 1.0)) throw ConfigError("loss power must be >= 1");
  return {LossFamily::ExpPower, a};
}

LossKind LossKind::logistic_power(double a) {
  if (!(a >= 1.0)) throw ConfigError("loss power must be >= 1");
  return {LossFamily::LogisticPower, a};
}

LossKind parse_loss(const std::string& name) {
  if (name == "exp") return LossKind::exponential();
  if (name == "logistic") return LossKind::logistic();
  const auto colon = name.find(':');
  if (colon != std::string::npos) {
    const std::string head = name.substr(0, colon);
    double a = 0.0;
    try {
      std::size_t used = 0;
      a = std::stod(name.substr(colon + 1), &used);
      if (used != name.size() - colon - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("bad loss exponent in '" + name + "'");
    }
    if (head == "exp_pow") return LossKind::exp_power(a);
    if (head == "logistic_pow") return LossKind::logistic_power(a);
  }
  throw ConfigError("unknown loss '" + name + "'");
}

std::string to_string(const LossKind& kind) {
  char buf[64];
  switch (kind.family) {
    case LossFamily::Exponential:
      return "exp";
    case LossFamily::Logistic:
      return "logistic";
    case LossFamily::ExpPower:
      std::snprintf(buf, sizeof buf, "exp_pow:%.17g", kind.power);
      return buf;
    case LossFamily::LogisticPower:
      std::snprintf(buf, sizeof buf, "logistic_pow:%.17g", kind.power);
      return buf;
  }
  return "unknown";
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double loss_value(const LossKind& kind, double q) {
  check_finite(q);
  switch (kind.family) {
    case LossFamily::Exponential:
    case LossFamily::ExpPower:
      return std::exp(-psi(q, kind.power));
    case LossFamily::Logistic:
    case LossFamily::LogisticPower:
      return softplus(-psi(q, kind.power));
  }
  return 0.0;
}

double log_loss_value(const LossKind& kind, double q) {
  check_finite(q);
  const double s = psi(q, kind.power);
  switch (kind.family) {
    case LossFamily::Exponential:
    case LossFamily::ExpPower:
      return -s;
    case LossFamily::Logistic:
    case LossFamily::LogisticPower:
      // log log(1 + e^{-s}); for large s, log1p(e^{-s}) = e^{-s}(1 - e^{-s}/2 + ...)
      if (s > 30.0) return -s + std::log1p(-0.5 * std::exp(-s));
      return std::log(softplus(-s));
  }
  return 0.0;
}

double log_neg_deriv(const LossKind& kind, double q) {
  check_finite(q);
  const double s = psi(q, kind.power);
  const double lp = log_psi_prime(q, kind.power);
  switch (kind.family) {
    case LossFamily::Exponential:
    case LossFamily::ExpPower:
      return lp - s;
    case LossFamily::Logistic:
    case LossFamily::LogisticPower:
      // -l' = ψ' e^{-s} / (1 + e^{-s}) = ψ' / (1 + e^{s})
      return lp - softplus(s);
  }
  return 0.0;
}

double neg_deriv(const LossKind& kind, double q) { return std::exp(log_neg_deriv(kind, q)); }

}  // namespace hbias
