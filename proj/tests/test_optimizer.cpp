#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "doctest.h"
#include "hbias/datasets.hpp"
#include "hbias/error.hpp"
#include "hbias/numeric.hpp"
#include "hbias/optimizer.hpp"

using namespace hbias;

namespace {

Dataset single_sample() {
  Dataset d;
  d.samples = {Sample{{1.0, 0.0}, 1.0}};
  d.meta.generator = "manual";
  return d;
}

ExperimentConfig linear_config(std::size_t d) {
  ExperimentConfig c;
  c.spec = NetSpec::linear(d);
  c.loss = LossKind::exponential();
  c.gamma = StepSchedule::constant(1.0);
  c.kink = default_kink(c.spec.activation);
  return c;
}

bool same(const Trajectory& a, const Trajectory& b) {
  if (a.records.size() != b.records.size() || a.snapshots.size() != b.snapshots.size()) return false;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const auto& r = a.records[i];
    const auto& s = b.records[i];
    auto eq = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
    if (r.k != s.k || !eq(r.norm_w, s.norm_w) || !eq(r.normalized_margin, s.normalized_margin) ||
        !eq(r.log_loss, s.log_loss) || !eq(r.log_gamma_bar, s.log_gamma_bar))
      return false;
  }
  for (std::size_t i = 0; i < a.snapshots.size(); ++i)
    if (a.snapshots[i].w != b.snapshots[i].w || a.snapshots[i].batch != b.snapshots[i].batch)
      return false;
  return a.final_weights == b.final_weights && a.k_sep == b.k_sep;
}

}  // namespace

TEST_CASE("two hand-computed GD steps from the origin") {
  ExperimentConfig c = linear_config(2);
  c.iterations = 2;
  c.snapshot_stride = 1;
  c.init.weights = {0.0, 0.0};
  const Trajectory t = run(c, single_sample());
  REQUIRE(t.snapshots.size() >= 2);
  CHECK(t.snapshots[0].w == std::vector<double>{0.0, 0.0});
  CHECK(t.snapshots[0].w_next == std::vector<double>{1.0, 0.0});
  CHECK(t.snapshots[1].w_next[0] == doctest::Approx(1.0 + std::exp(-1.0)).epsilon(1e-15));
  CHECK(t.snapshots[1].w_next[1] == 0.0);
  CHECK(t.final_weights[0] == doctest::Approx(1.0 + std::exp(-1.0)).epsilon(1e-15));
}

TEST_CASE("sample_batch edge cases") {
  Rng rng(1);
  CHECK(sample_batch(rng, 3, 3) == std::vector<std::size_t>{0, 1, 2});
  CHECK(sample_batch(rng, 1, 1) == std::vector<std::size_t>{0});
  CHECK_THROWS(sample_batch(rng, 3, 4));
  CHECK_THROWS(sample_batch(rng, 3, 0));
}

TEST_CASE("sample_batch is uniform over subsets (chi-square)") {
  Rng rng(2024);
  std::map<std::vector<std::size_t>, int> counts;
  const int draws = 60000;
  for (int i = 0; i < draws; ++i) ++counts[sample_batch(rng, 4, 2)];
  CHECK(counts.size() == 6);
  double chi2 = 0.0;
  for (const auto& [subset, c] : counts) {
    CHECK(std::abs(c / double(draws) - 1.0 / 6.0) <= 0.01);
    const double e = draws / 6.0;
    chi2 += (c - e) * (c - e) / e;
  }
  CHECK(chi2 < 20.52);  // 0.999 quantile of chi-square with 5 degrees of freedom
}

TEST_CASE("full-batch direction in factored form") {
  const NetSpec lin = NetSpec::linear(2);
  const WeightVector w({0.0, 0.0}, lin.shapes());
  const Direction d = full_batch_direction(lin, w, single_sample(), LossKind::exponential(),
                                           KinkSelection{});
  CHECK(d.unit[0] == doctest::Approx(1.0));
  CHECK(d.log_scale == doctest::Approx(0.0));

  Dataset pair;
  pair.samples = {Sample{{1.0, 0.0}, 1.0}, Sample{{-1.0, 0.0}, 1.0}};
  const Direction z = full_batch_direction(lin, w, pair, LossKind::exponential(), KinkSelection{});
  CHECK(z.log_scale == -std::numeric_limits<double>::infinity());
  CHECK(norm2(z.unit) == 0.0);
}

TEST_CASE("mean minibatch direction equals the full-batch direction") {
  const Dataset data = gen_linear_separable(3, 4, 3, 0.1, 1.0);
  const NetSpec spec = NetSpec::mlp({3, 5, 1}, Activation::relu());
  const WeightVector w = init_weights(spec, 4, InitOptions{1.0, std::nullopt});
  const LossKind loss = LossKind::logistic();
  const Direction full = full_batch_direction(spec, w, data, loss, KinkSelection{});
  std::vector<double> mean(w.data.size(), 0.0);
  int count = 0;
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = a + 1; b < 4; ++b) {
      const std::vector<std::size_t> idx = {a, b};
      const Direction d = batch_direction(spec, w, data, loss, KinkSelection{}, idx);
      axpy(std::exp(d.log_scale), d.unit, mean);
      ++count;
    }
  for (double& v : mean) v /= count;
  const double fs = std::exp(full.log_scale);
  double err = 0.0;
  for (std::size_t j = 0; j < mean.size(); ++j) err = std::max(err, std::abs(mean[j] - fs * full.unit[j]));
  CHECK(err <= 1e-12 * fs);
}

TEST_CASE("reruns and GD-as-full-batch-SGD are bit-identical") {
  const Dataset data = gen_linear_separable(11, 4, 2, 0.2, 1.0);
  ExperimentConfig c = linear_config(2);
  c.gamma = StepSchedule::constant(0.5);
  c.iterations = 500;
  c.snapshot_stride = 50;
  c.seed = 77;
  c.batch_size = 2;
  CHECK(same(run(c, data), run(c, data)));

  ExperimentConfig gd = c;
  gd.batch_size.reset();
  ExperimentConfig full = c;
  full.batch_size = 4;
  CHECK(same(run(gd, data), run(full, data)));
}

TEST_CASE("config validation") {
  const Dataset data = gen_linear_separable(11, 4, 2, 0.2, 1.0);
  ExperimentConfig c = linear_config(2);
  c.batch_size = 5;
  CHECK_THROWS_AS(run(c, data), ConfigError);
  c.batch_size = 0;
  CHECK_THROWS_AS(run(c, data), ConfigError);
  ExperimentConfig s = linear_config(2);
  s.gamma = StepSchedule::power(0.1, 0.4);
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.gamma = StepSchedule::power(0.1, 0.75);
  CHECK_NOTHROW(s.validate());
  CHECK(s.gamma.at(3) == doctest::Approx(0.1 / std::pow(4.0, 0.75)));
  ExperimentConfig z = linear_config(2);
  z.iterations = 0;
  CHECK_THROWS_AS(z.validate(), ConfigError);
  ExperimentConfig d3 = linear_config(3);
  CHECK_THROWS_AS(run(d3, data), DimensionError);
}

TEST_CASE("norm grows strictly once the margin is positive") {
  const Dataset data = gen_linear_separable(5, 20, 2, 0.3, 1.0);
  for (const LossKind& loss : {LossKind::exponential(), LossKind::logistic()}) {
    ExperimentConfig c = linear_config(2);
    c.loss = loss;
    c.gamma = StepSchedule::constant(0.1);
    c.iterations = 3000;
    const Trajectory t = run(c, data);
    for (std::size_t i = 0; i + 1 < t.records.size(); ++i)
      if (t.records[i].normalized_margin > 0.0) CHECK(t.records[i + 1].norm_w > t.records[i].norm_w);
    CHECK(t.k_sep.has_value());
  }
}

TEST_CASE("records and snapshots follow the strides") {
  const Dataset data = gen_linear_separable(5, 8, 2, 0.3, 1.0);
  ExperimentConfig c = linear_config(2);
  c.iterations = 100;
  c.record_stride = 7;
  c.snapshot_stride = 20;
  const Trajectory t = run(c, data);
  std::set<std::uint64_t> rk;
  for (std::size_t i = 0; i < t.records.size(); ++i) {
    rk.insert(t.records[i].k);
    if (i) CHECK(t.records[i].k > t.records[i - 1].k);
  }
  for (const auto& s : t.snapshots) {
    CHECK(rk.count(s.k) == 1);
    CHECK(s.k % 20 == 0);
  }
  CHECK(t.records.back().k == 100);
  CHECK(rk.count(14) == 1);
}

TEST_CASE("separation detector needs persistence") {
  std::vector<StepRecord> r(30);
  for (std::size_t i = 0; i < r.size(); ++i) {
    r[i].k = i;
    r[i].normalized_margin = i >= 5 ? 0.1 : -0.1;
  }
  r[8].normalized_margin = -0.01;
  CHECK(detect_separation(r, 1e-6, 10) == std::optional<std::uint64_t>(9));
  r[15].normalized_margin = -1;
  CHECK(detect_separation(r, 1e-6, 10) == std::optional<std::uint64_t>(16));
  r[20].normalized_margin = -1;
  CHECK_FALSE(detect_separation(r, 1e-6, 10).has_value());
}

TEST_CASE("non-finite iterates abort with the last finite state") {
  Dataset data;
  data.samples = {Sample{{1.0, 0.0}, 1.0}, Sample{{0.0, 1.0}, -1.0}};
  ExperimentConfig c;
  c.spec = NetSpec::mlp({2, 2, 2, 2, 1}, Activation::linear());
  c.loss = LossKind::exponential();
  c.gamma = StepSchedule::constant(1e200);
  c.iterations = 10;
  c.init.scale = 1.0;
  try {
    run(c, data);
    FAIL("expected a numerical abort");
  } catch (const NumericalAbort& e) {
    for (double v : e.partial().final_weights) CHECK(std::isfinite(v));
    CHECK(e.partial().aborted);
  }
}
