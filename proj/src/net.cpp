#include "hbias/net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hbias/error.hpp"
#include "hbias/random.hpp"

namespace hbias {

double Activation::apply(double z) const {
  switch (kind) {
    case ActivationKind::ReLU:
      return z > 0.0 ? z : 0.0;
    case ActivationKind::LeakyReLU:
      return z > 0.0 ? z : slope * z;
    case ActivationKind::Linear:
      return z;
  }
  return z;
}

double Activation::derivative(double z) const {
  switch (kind) {
    case ActivationKind::ReLU:
      return z > 0.0 ? 1.0 : 0.0;
    case ActivationKind::LeakyReLU:
      return z > 0.0 ? 1.0 : slope;
    case ActivationKind::Linear:
      return 1.0;
  }
  return 1.0;
}

double Activation::kink_lo() const {
  switch (kind) {
    case ActivationKind::ReLU:
      return 0.0;
    case ActivationKind::LeakyReLU:
      return slope;
    case ActivationKind::Linear:
      return 1.0;
  }
  return 0.0;
}

double Activation::kink_hi() const { return 1.0; }

std::string to_string(const Activation& act) {
  switch (act.kind) {
    case ActivationKind::ReLU:
      return "relu";
    case ActivationKind::LeakyReLU:
      return "leaky_relu";
    case ActivationKind::Linear:
      return "linear";
  }
  return "unknown";
}

Activation parse_activation(const std::string& name, double slope) {
  if (name == "relu") return Activation::relu();
  if (name == "linear") return Activation::linear();
  if (name == "leaky_relu") {
    if (!(slope > 0.0 && slope < 1.0))
      throw ConfigError("leaky_relu slope must lie in (0, 1), got " + std::to_string(slope));
    return Activation::leaky_relu(slope);
  }
  throw ConfigError("unknown activation '" + name + "'");
}

std::size_t NetSpec::num_params() const {
  std::size_t total = 0;
  for (const auto& s : shapes()) total += s.size();
  return total;
}

std::vector<LayerShape> NetSpec::shapes() const {
  std::vector<LayerShape> out;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) out.push_back({widths[l + 1], widths[l]});
  return out;
}

void NetSpec::validate() const {
  if (widths.size() < 2) throw ConfigError("network needs at least an input and an output width");
  for (std::size_t l = 0; l < widths.size(); ++l)
    if (widths[l] == 0) throw ConfigError("layer width " + std::to_string(l) + " is zero");
  if (widths.back() != 1) throw ConfigError("output width must be 1");
  if (activation.kind == ActivationKind::LeakyReLU &&
      !(activation.slope > 0.0 && activation.slope < 1.0))
    throw ConfigError("leaky_relu slope must lie in (0, 1)");
}

NetSpec NetSpec::linear(std::size_t d_in) { return NetSpec{{d_in, 1}, Activation::linear()}; }

NetSpec NetSpec::mlp(std::vector<std::size_t> widths, Activation act) {
  NetSpec spec{std::move(widths), act};
  spec.validate();
  return spec;
}

WeightVector::WeightVector(std::vector<double> values, std::vector<LayerShape> layer_shapes)
    : data(std::move(values)), shapes(std::move(layer_shapes)) {
  std::size_t total = 0;
  for (const auto& s : shapes) total += s.size();
  if (total != data.size())
    throw DimensionError("weight vector has " + std::to_string(data.size()) +
                         " entries but shapes require " + std::to_string(total));
}

WeightVector WeightVector::zeros(const NetSpec& spec) {
  return WeightVector(std::vector<double>(spec.num_params(), 0.0), spec.shapes());
}

double WeightVector::norm() const {
  double s = 0.0;
  for (double v : data) s += v * v;
  return std::sqrt(s);
}

std::span<const double> WeightVector::layer(std::size_t l) const {
  std::size_t off = 0;
  for (std::size_t i = 0; i < l; ++i) off += shapes.at(i).size();
  return std::span<const double>(data).subspan(off, shapes.at(l).size());
}

std::span<double> WeightVector::layer(std::size_t l) {
  std::size_t off = 0;
  for (std::size_t i = 0; i < l; ++i) off += shapes.at(i).size();
  return std::span<double>(data).subspan(off, shapes.at(l).size());
}

WeightVector WeightVector::scaled(double factor) const {
  WeightVector out = *this;
  for (double& v : out.data) v *= factor;
  return out;
}

KinkSelection default_kink(const Activation& act) { return {act.kink_lo()}; }

void validate_kink(const Activation& act, KinkSelection ks) {
  if (!act.has_kink()) return;
  if (!(ks.e >= act.kink_lo() && ks.e <= act.kink_hi()))
    throw ConfigError("kink selection " + std::to_string(ks.e) + " is outside [" +
                      std::to_string(act.kink_lo()) + ", " + std::to_string(act.kink_hi()) + "]");
}

NetEvaluator::NetEvaluator(const NetSpec& spec) : spec_(spec), shapes_(spec.shapes()) {
  spec_.validate();
  std::size_t off = 0;
  for (const auto& s : shapes_) {
    offsets_.push_back(off);
    off += s.size();
  }
  const std::size_t layers = shapes_.size();
  pre_.resize(layers);
  post_.resize(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    pre_[l].assign(shapes_[l].rows, 0.0);
    post_[l].assign(shapes_[l].cols, 0.0);
  }
  const std::size_t widest = *std::max_element(spec_.widths.begin(), spec_.widths.end());
  delta_.assign(widest, 0.0);
  delta_prev_.assign(widest, 0.0);
}

void NetEvaluator::check(std::span<const double> w, std::span<const double> x) const {
  if (x.size() != spec_.input_dim())
    throw DimensionError("input has length " + std::to_string(x.size()) + ", layer 0 expects " +
                         std::to_string(spec_.input_dim()));
  const std::size_t expected = offsets_.back() + shapes_.back().size();
  if (w.size() != expected) {
    // name the first layer whose block is not fully covered
    std::size_t l = 0;
    while (l < shapes_.size() && offsets_[l] + shapes_[l].size() <= w.size()) ++l;
    throw DimensionError("weight vector has " + std::to_string(w.size()) + " entries, expected " +
                         std::to_string(expected) + " (mismatch at layer " +
                         std::to_string(std::min(l, shapes_.size() - 1)) + ")");
  }
}

double NetEvaluator::run_forward(std::span<const double> w, std::span<const double> x) {
  zero_sites_.clear();
  const std::size_t layers = shapes_.size();
  std::copy(x.begin(), x.end(), post_[0].begin());
  for (std::size_t l = 0; l < layers; ++l) {
    const auto& s = shapes_[l];
    const double* W = w.data() + offsets_[l];
    const std::vector<double>& in = post_[l];
    std::vector<double>& z = pre_[l];
    for (std::size_t r = 0; r < s.rows; ++r) {
      double acc = 0.0;
      const double* row = W + r * s.cols;
      for (std::size_t c = 0; c < s.cols; ++c) acc += row[c] * in[c];
      z[r] = acc;
    }
    if (l + 1 < layers) {
      std::vector<double>& out = post_[l + 1];
      for (std::size_t r = 0; r < s.rows; ++r) {
        if (z[r] == 0.0 && spec_.activation.has_kink()) zero_sites_.push_back({l, r});
        out[r] = spec_.activation.apply(z[r]);
      }
    }
  }
  return pre_.back()[0];
}

double NetEvaluator::forward(std::span<const double> w, std::span<const double> x) {
  check(w, x);
  return run_forward(w, x);
}

double NetEvaluator::signed_output_and_grad(std::span<const double> w, std::span<const double> x,
                                            double y, KinkSelection ks, std::span<double> grad,
                                            std::span<const double> site_overrides) {
  check(w, x);
  if (grad.size() != w.size())
    throw DimensionError("gradient buffer has length " + std::to_string(grad.size()) +
                         ", expected " + std::to_string(w.size()));
  const double out = run_forward(w, x);
  if (!site_overrides.empty() && site_overrides.size() != zero_sites_.size())
    throw DimensionError("kink override count does not match the number of zero pre-activations");

  const std::size_t layers = shapes_.size();
  delta_[0] = y;
  // Zero sites were recorded layer by layer in increasing order; walk them
  // backwards while descending through the layers.
  std::size_t site = zero_sites_.size();
  for (std::size_t l = layers; l-- > 0;) {
    const auto& s = shapes_[l];
    const double* W = w.data() + offsets_[l];
    double* G = grad.data() + offsets_[l];
    const std::vector<double>& in = post_[l];
    for (std::size_t r = 0; r < s.rows; ++r) {
      const double d = delta_[r];
      double* grow = G + r * s.cols;
      for (std::size_t c = 0; c < s.cols; ++c) grow[c] = d * in[c];
    }
    if (l == 0) break;
    for (std::size_t c = 0; c < s.cols; ++c) {
      double acc = 0.0;
      for (std::size_t r = 0; r < s.rows; ++r) acc += W[r * s.cols + c] * delta_[r];
      delta_prev_[c] = acc;
    }
    const std::vector<double>& z = pre_[l - 1];
    // sites belonging to layer l-1, in forward order, occupy a contiguous block
    while (site > 0 && zero_sites_[site - 1].layer == l - 1) --site;
    std::size_t next = site;
    for (std::size_t c = 0; c < s.cols; ++c) {
      double slope;
      if (z[c] == 0.0 && spec_.activation.has_kink()) {
        slope = site_overrides.empty() ? ks.e : site_overrides[next];
        ++next;
      } else {
        slope = spec_.activation.derivative(z[c]);
      }
      delta_[c] = delta_prev_[c] * slope;
    }
  }
  return y * out;
}

double NetEvaluator::min_abs_preactivation() const {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l + 1 < pre_.size(); ++l)
    for (double z : pre_[l]) m = std::min(m, std::abs(z));
  return m;
}

double forward(const NetSpec& spec, const WeightVector& w, std::span<const double> x) {
  if (w.shapes != spec.shapes()) throw DimensionError("weight shapes do not match the network");
  NetEvaluator ev(spec);
  return ev.forward(w.data, x);
}

double signed_output(const NetSpec& spec, const WeightVector& w, const Sample& sample) {
  return sample.y * forward(spec, w, sample.x);
}

WeightVector conservative_grad(const NetSpec& spec, const WeightVector& w, const Sample& sample,
                               KinkSelection ks) {
  if (w.shapes != spec.shapes()) throw DimensionError("weight shapes do not match the network");
  NetEvaluator ev(spec);
  WeightVector g = WeightVector::zeros(spec);
  ev.signed_output_and_grad(w.data, sample.x, sample.y, ks, g.data);
  return g;
}

double homogeneity_check(const NetSpec& spec, const WeightVector& w, std::span<const double> x,
                         std::span<const double> lambdas) {
  const double base = forward(spec, w, x);
  const double L = static_cast<double>(spec.depth());
  double worst = 0.0;
  for (double lam : lambdas) {
    if (!(lam > 0.0)) throw DomainError("homogeneity_check requires positive scale factors");
    const double scaled = forward(spec, w.scaled(lam), x);
    const double lamL = std::pow(lam, L);
    worst = std::max(worst, std::abs(scaled - lamL * base) / (1.0 + std::abs(base) * lamL));
  }
  return worst;
}

WeightVector init_weights(const NetSpec& spec, std::uint64_t seed, const InitOptions& opts) {
  spec.validate();
  if (!(opts.scale > 0.0)) throw ConfigError("init scale must be positive");
  Rng rng(derive_seed(seed, 0x1a17));
  WeightVector w = WeightVector::zeros(spec);
  for (double& v : w.data) v = rng.uniform(-opts.scale, opts.scale);
  if (opts.target_norm) {
    if (!(*opts.target_norm >= 0.0)) throw ConfigError("init target norm must be nonnegative");
    const double n = w.norm();
    if (n > 0.0)
      for (double& v : w.data) v *= *opts.target_norm / n;
  }
  return w;
}

double output_bound(const NetSpec& spec, double max_input_norm) {
  const double L = static_cast<double>(spec.depth());
  return max_input_norm * std::pow(L, -L / 2.0);
}

double gradient_bound(const NetSpec& spec, double max_input_norm) {
  return std::sqrt(static_cast<double>(spec.depth())) * max_input_norm;
}

}  // namespace hbias
