#pragma once

// Bias-free fully-connected networks Φ(x; w) = W_L σ(W_{L-1} σ(... σ(W_1 x)))
// with a piecewise-linear positively homogeneous activation. Such a network
// is positively L-homogeneous in the stacked weights w = [W_1, ..., W_L].

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hbias {

enum class ActivationKind { ReLU, LeakyReLU, Linear };

struct Activation {
  ActivationKind kind = ActivationKind::ReLU;
  double slope = 0.0;  // negative-side slope, LeakyReLU only

  double apply(double z) const;
  // Derivative away from 0. At exactly 0 the caller supplies a kink selection.
  double derivative(double z) const;
  // End points of the Clarke subdifferential of σ at 0.
  double kink_lo() const;
  double kink_hi() const;
  bool has_kink() const { return kind != ActivationKind::Linear; }

  static Activation relu() { return {ActivationKind::ReLU, 0.0}; }
  static Activation leaky_relu(double a) { return {ActivationKind::LeakyReLU, a}; }
  static Activation linear() { return {ActivationKind::Linear, 0.0}; }
};

std::string to_string(const Activation& act);
Activation parse_activation(const std::string& name, double slope);

struct LayerShape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
  bool operator==(const LayerShape&) const = default;
};

struct NetSpec {
  // d_in, hidden widths..., 1
  std::vector<std::size_t> widths;
  Activation activation;

  // Number of weight layers, i.e. the homogeneity degree L.
  std::size_t depth() const { return widths.empty() ? 0 : widths.size() - 1; }
  std::size_t input_dim() const { return widths.empty() ? 0 : widths.front(); }
  std::size_t num_params() const;
  std::vector<LayerShape> shapes() const;

  // Throws ConfigError on an ill-formed architecture.
  void validate() const;

  static NetSpec linear(std::size_t d_in);
  static NetSpec mlp(std::vector<std::size_t> widths, Activation act);
};

// Flat parameter vector; layer l occupies a contiguous row-major block of
// shapes[l].rows x shapes[l].cols entries.
struct WeightVector {
  std::vector<double> data;
  std::vector<LayerShape> shapes;

  WeightVector() = default;
  WeightVector(std::vector<double> values, std::vector<LayerShape> layer_shapes);
  static WeightVector zeros(const NetSpec& spec);

  std::size_t size() const { return data.size(); }
  double norm() const;
  std::span<const double> layer(std::size_t l) const;
  std::span<double> layer(std::size_t l);
  WeightVector scaled(double factor) const;
};

struct Sample {
  std::vector<double> x;
  double y = 1.0;
};

// The element e of ∂σ(0) that backpropagation uses at exactly-zero
// pre-activations.
struct KinkSelection {
  double e = 0.0;
};

// Default selection: the lower end of ∂σ(0) (0 for ReLU, a for LeakyReLU).
KinkSelection default_kink(const Activation& act);
void validate_kink(const Activation& act, KinkSelection ks);

// Location of an exactly-zero pre-activation found during a forward pass.
struct KinkSite {
  std::size_t layer = 0;  // index of the weight layer producing the pre-activation
  std::size_t unit = 0;
};

// Reusable forward/backward workspace. Not thread-safe; use one per thread.
class NetEvaluator {
 public:
  explicit NetEvaluator(const NetSpec& spec);

  const NetSpec& spec() const { return spec_; }

  // Φ(x; w).
  double forward(std::span<const double> w, std::span<const double> x);

  // Returns p = y Φ(x; w) and writes the backprop selection of the
  // conservative field of p into grad. Zero pre-activations use ks.e unless
  // site_overrides is nonempty, in which case the s-th zero site (forward
  // order) uses site_overrides[s].
  double signed_output_and_grad(std::span<const double> w, std::span<const double> x,
                                double y, KinkSelection ks, std::span<double> grad,
                                std::span<const double> site_overrides = {});

  // Zero pre-activation sites of the most recent forward pass.
  const std::vector<KinkSite>& zero_sites() const { return zero_sites_; }

  // Smallest |pre-activation| over hidden units in the last forward pass
  // (infinity when there are no hidden layers).
  double min_abs_preactivation() const;

 private:
  void check(std::span<const double> w, std::span<const double> x) const;
  double run_forward(std::span<const double> w, std::span<const double> x);

  NetSpec spec_;
  std::vector<LayerShape> shapes_;
  std::vector<std::size_t> offsets_;
  std::vector<std::vector<double>> pre_;   // z_l for every layer
  std::vector<std::vector<double>> post_;  // a_l, post_[0] = x
  std::vector<double> delta_;
  std::vector<double> delta_prev_;
  std::vector<KinkSite> zero_sites_;
};

double forward(const NetSpec& spec, const WeightVector& w, std::span<const double> x);
double signed_output(const NetSpec& spec, const WeightVector& w, const Sample& sample);
WeightVector conservative_grad(const NetSpec& spec, const WeightVector& w, const Sample& sample,
                               KinkSelection ks);

// Max over λ of |Φ(x; λw) − λ^L Φ(x; w)| / (1 + |Φ(x; w)| λ^L).
double homogeneity_check(const NetSpec& spec, const WeightVector& w, std::span<const double> x,
                         std::span<const double> lambdas);

struct InitOptions {
  double scale = 1.0;                  // entries i.i.d. uniform on [-scale, scale]
  std::optional<double> target_norm;   // rescale to this Euclidean norm
};

WeightVector init_weights(const NetSpec& spec, std::uint64_t seed, const InitOptions& opts);

// Upper bound on |Φ(x; u)| over unit-norm weights u and inputs with
// ‖x‖ ≤ max_input_norm: ‖x‖ L^{-L/2} (AM-GM on the layer Frobenius norms).
double output_bound(const NetSpec& spec, double max_input_norm);
// Upper bound on ‖∂p/∂w‖ at unit-norm weights: √L ‖x‖.
double gradient_bound(const NetSpec& spec, double max_input_norm);

}  // namespace hbias
