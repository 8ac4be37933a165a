#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hbias/net.hpp"

namespace hbias {

struct DatasetMeta {
  std::string generator;  // "linear", "xor_ring", "csv", ...
  std::uint64_t seed = 0;
  // linear generator: unit normal ν and the certified bound min_i y_i <ν, x_i> >= margin
  std::vector<double> normal;
  std::optional<double> certified_margin;
  double radius = 0.0;
  // xor_ring: a width-4 ReLU network separating the data
  std::optional<NetSpec> witness_spec;
  std::vector<double> witness_weights;
};

struct Dataset {
  std::vector<Sample> samples;
  DatasetMeta meta;

  std::size_t size() const { return samples.size(); }
  std::size_t dim() const { return samples.empty() ? 0 : samples.front().x.size(); }
  double max_input_norm() const;
  // Throws DimensionError / DomainError when the invariants fail.
  void validate() const;
};

// Points uniform in the radius-R ball, rejected when |<ν, x>| < m, labelled
// sign <ν, x> for a random unit ν. With symmetric = true every accepted x is
// emitted together with its mirror (-x, -y); n must then be even.
Dataset gen_linear_separable(std::uint64_t seed, std::size_t n, std::size_t d, double margin,
                             double radius, bool symmetric = false);

// Four clusters of radius 0.2 around (±1, ±1) with XOR labels y = sign(x1 x2).
Dataset gen_xor_ring(std::uint64_t seed, std::size_t n);

Dataset load_csv(const std::string& path);
Dataset parse_csv(const std::string& text);
std::string to_csv(const Dataset& data);

}  // namespace hbias
