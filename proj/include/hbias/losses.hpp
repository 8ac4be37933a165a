#pragma once

// Margin-based losses l(q) evaluated in the log domain. Arguments grow like
// ‖w‖^L during training, so -l'(q) leaves the range of doubles quickly;
// every aggregation downstream works on log(-l'(q)) and log l(q).

#include <string>

namespace hbias {

enum class LossFamily { Exponential, Logistic, ExpPower, LogisticPower };

struct LossKind {
  LossFamily family = LossFamily::Exponential;
  double power = 1.0;  // exponent a of the *Power variants, a >= 1

  static LossKind exponential() { return {LossFamily::Exponential, 1.0}; }
  static LossKind logistic() { return {LossFamily::Logistic, 1.0}; }
  static LossKind exp_power(double a);
  static LossKind logistic_power(double a);

  // l' < 0 on [q0, inf).
  double q0() const { return 0.0; }
};

// "exp", "logistic", "exp_pow:a", "logistic_pow:a"
LossKind parse_loss(const std::string& name);
std::string to_string(const LossKind& kind);

double loss_value(const LossKind& kind, double q);
double log_loss_value(const LossKind& kind, double q);
// log(-l'(q)); -inf where l'(q) = 0 (power variants at q = 0).
double log_neg_deriv(const LossKind& kind, double q);
// -l'(q); underflows to 0 once log_neg_deriv drops below the double range.
double neg_deriv(const LossKind& kind, double q);

// log(1 + e^x) without overflow.
double softplus(double x);

}  // namespace hbias
