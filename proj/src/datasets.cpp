#include "hbias/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hbias/error.hpp"
#include "hbias/random.hpp"

namespace hbias {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> unit_vector(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  double n = 0.0;
  while (n == 0.0) {
    for (double& c : v) c = rng.normal();
    n = std::sqrt(dot(v, v));
  }
  for (double& c : v) c /= n;
  return v;
}

std::vector<double> uniform_in_ball(Rng& rng, std::size_t d, double radius) {
  std::vector<double> v = unit_vector(rng, d);
  const double r = radius * std::pow(rng.uniform01(), 1.0 / static_cast<double>(d));
  for (double& c : v) c *= r;
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

}  // namespace

double Dataset::max_input_norm() const {
  double m = 0.0;
  for (const auto& s : samples) m = std::max(m, std::sqrt(dot(s.x, s.x)));
  return m;
}

void Dataset::validate() const {
  if (samples.empty()) throw DomainError("dataset is empty");
  const std::size_t d = samples.front().x.size();
  if (d == 0) throw DimensionError("dataset features are empty");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].x.size() != d)
      throw DimensionError("sample " + std::to_string(i) + " has " +
                           std::to_string(samples[i].x.size()) + " features, expected " +
                           std::to_string(d));
    if (samples[i].y != 1.0 && samples[i].y != -1.0)
      throw DomainError("sample " + std::to_string(i) + " has a label outside {-1, +1}");
  }
}

Dataset gen_linear_separable(std::uint64_t seed, std::size_t n, std::size_t d, double margin,
                             double radius, bool symmetric) {
  if (n == 0 || d == 0) throw ConfigError("linear generator needs n >= 1 and d >= 1");
  if (symmetric && n % 2 != 0) throw ConfigError("symmetric linear generator needs an even n");
  if (!(margin > 0.0 && margin < radius))
    throw ConfigError("linear generator needs 0 < margin < radius");
  Rng rng(derive_seed(seed, 0x11ea));
  Dataset data;
  data.meta.generator = symmetric ? "linear_symmetric" : "linear";
  data.meta.seed = seed;
  data.meta.radius = radius;
  data.meta.certified_margin = margin;
  data.meta.normal = unit_vector(rng, d);

  const std::size_t max_draws = 1000 * n;
  std::size_t draws = 0;
  while (data.samples.size() < n) {
    if (draws++ >= max_draws)
      throw DomainError("linear generator rejected " + std::to_string(max_draws) +
                        " draws; margin too large for the radius");
    std::vector<double> x = uniform_in_ball(rng, d, radius);
    const double s = dot(data.meta.normal, x);
    if (std::abs(s) < margin) continue;
    const double y = s > 0.0 ? 1.0 : -1.0;
    if (symmetric) {
      std::vector<double> mirror = x;
      for (double& c : mirror) c = -c;
      data.samples.push_back({std::move(x), y});
      data.samples.push_back({std::move(mirror), -y});
    } else {
      data.samples.push_back({std::move(x), y});
    }
  }
  return data;
}

Dataset gen_xor_ring(std::uint64_t seed, std::size_t n) {
  if (n < 8 || n % 4 != 0) throw ConfigError("xor_ring needs n >= 8 and divisible by 4");
  Rng rng(derive_seed(seed, 0x0a11));
  const double centers[4][2] = {{1.0, 1.0}, {-1.0, -1.0}, {1.0, -1.0}, {-1.0, 1.0}};
  Dataset data;
  data.meta.generator = "xor_ring";
  data.meta.seed = seed;
  for (std::size_t c = 0; c < 4; ++c) {
    for (std::size_t j = 0; j < n / 4; ++j) {
      const std::vector<double> off = uniform_in_ball(rng, 2, 0.2);
      std::vector<double> x = {centers[c][0] + off[0], centers[c][1] + off[1]};
      const double y = centers[c][0] * centers[c][1] > 0.0 ? 1.0 : -1.0;
      data.samples.push_back({std::move(x), y});
    }
  }
  // relu(x1 + x2) + relu(-x1 - x2) - relu(x1 - x2) - relu(x2 - x1) = |x1 + x2| - |x1 - x2|
  data.meta.witness_spec = NetSpec::mlp({2, 4, 1}, Activation::relu());
  data.meta.witness_weights = {1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0, 1.0,
                               1.0, 1.0, -1.0, -1.0};
  return data;
}

Dataset parse_csv(const std::string& text) {
  Dataset data;
  data.meta.generator = "csv";
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  bool seen_first = false;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    std::vector<double> values(fields.size());
    bool numeric = true;
    for (std::size_t i = 0; i < fields.size(); ++i)
      if (!parse_double(fields[i], values[i])) numeric = false;
    if (!seen_first) {
      seen_first = true;
      width = fields.size();
      if (width < 2)
        throw IoError("line " + std::to_string(lineno) + ": need at least one feature and a label");
      if (!numeric) continue;  // header row
    }
    if (fields.size() != width)
      throw IoError("line " + std::to_string(lineno) + ": expected " + std::to_string(width) +
                    " columns, found " + std::to_string(fields.size()));
    if (!numeric) throw IoError("line " + std::to_string(lineno) + ": non-numeric field");
    const double y = values.back();
    if (y != 1.0 && y != -1.0)
      throw IoError("line " + std::to_string(lineno) + ": label must be -1 or +1");
    values.pop_back();
    data.samples.push_back({std::move(values), y});
  }
  if (data.samples.empty()) throw IoError("dataset file contains no samples");
  return data;
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str());
}

std::string to_csv(const Dataset& data) {
  std::string out;
  const std::size_t d = data.dim();
  for (std::size_t j = 0; j < d; ++j) out += "x" + std::to_string(j + 1) + ",";
  out += "y\n";
  char buf[32];
  for (const auto& s : data.samples) {
    for (double v : s.x) {
      std::snprintf(buf, sizeof buf, "%.17g,", v);
      out += buf;
    }
    out += s.y > 0.0 ? "1\n" : "-1\n";
  }
  return out;
}

}  // namespace hbias
