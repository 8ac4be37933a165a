#include "hbias/hbias.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "hbias/criticality.hpp"
#include "hbias/datasets.hpp"
#include "hbias/dynamics.hpp"
#include "hbias/error.hpp"
#include "hbias/gradcheck.hpp"
#include "hbias/io.hpp"
#include "hbias/numeric.hpp"
#include "hbias/optimizer.hpp"
#include "json.hpp"

struct hb_dataset {
  hbias::Dataset data;
};
struct hb_config {
  hbias::ExperimentConfig config;
};
struct hb_trajectory {
  hbias::Trajectory traj;
  std::uint64_t last_finite_k = 0;
};

namespace {

thread_local std::string g_last_error;

hb_status fail(hb_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

// Maps every exception to a status code.
template <typename Fn>
hb_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    return fn();
  } catch (const hbias::DimensionError& e) {
    return fail(HB_ERR_DIMENSION, e.what());
  } catch (const hbias::DomainError& e) {
    return fail(HB_ERR_DOMAIN, e.what());
  } catch (const hbias::ConfigError& e) {
    return fail(HB_ERR_CONFIG, e.what());
  } catch (const hbias::IoError& e) {
    return fail(HB_ERR_IO, e.what());
  } catch (const hbias::NumericalError& e) {
    return fail(HB_ERR_NUMERICAL, e.what());
  } catch (const hbias::Error& e) {
    return fail(HB_ERR_INTERNAL, e.what());
  } catch (const std::bad_alloc&) {
    return fail(HB_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(HB_ERR_INTERNAL, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

#define HB_REQUIRE(cond, what) \
  if (!(cond)) return fail(HB_ERR_INVALID_ARGUMENT, what)

}  // namespace

extern "C" {

const char* hb_version(void) { return hbias::kVersion; }
const char* hb_last_error(void) { return g_last_error.c_str(); }

const char* hb_status_name(hb_status s) {
  switch (s) {
    case HB_OK: return "ok";
    case HB_ERR_INVALID_ARGUMENT: return "invalid argument";
    case HB_ERR_DIMENSION: return "dimension error";
    case HB_ERR_DOMAIN: return "domain error";
    case HB_ERR_CONFIG: return "config error";
    case HB_ERR_IO: return "io error";
    case HB_ERR_NUMERICAL: return "numerical abort";
    case HB_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void hb_string_free(char* s) { std::free(s); }

hb_status hb_dataset_gen_linear(uint64_t seed, size_t n, size_t d, double margin, double radius,
                                int symmetric, hb_dataset** out) {
  HB_REQUIRE(out, "out is null");
  return guarded([&] {
    *out = new hb_dataset{hbias::gen_linear_separable(seed, n, d, margin, radius, symmetric != 0)};
    return HB_OK;
  });
}

hb_status hb_dataset_gen_xor_ring(uint64_t seed, size_t n, hb_dataset** out) {
  HB_REQUIRE(out, "out is null");
  return guarded([&] {
    *out = new hb_dataset{hbias::gen_xor_ring(seed, n)};
    return HB_OK;
  });
}

hb_status hb_dataset_load_csv(const char* path, hb_dataset** out) {
  HB_REQUIRE(path && out, "null argument");
  return guarded([&] {
    *out = new hb_dataset{hbias::load_csv(path)};
    return HB_OK;
  });
}

hb_status hb_dataset_save(const hb_dataset* data, const char* csv_path) {
  HB_REQUIRE(data && csv_path, "null argument");
  return guarded([&] {
    hbias::write_dataset(data->data, csv_path);
    return HB_OK;
  });
}

size_t hb_dataset_size(const hb_dataset* data) { return data ? data->data.size() : 0; }
size_t hb_dataset_dim(const hb_dataset* data) { return data ? data->data.dim() : 0; }

hb_status hb_dataset_sample(const hb_dataset* data, size_t i, double* x, double* y) {
  HB_REQUIRE(data && x && y, "null argument");
  if (i >= data->data.size()) return fail(HB_ERR_DIMENSION, "sample index out of range");
  const auto& s = data->data.samples[i];
  std::copy(s.x.begin(), s.x.end(), x);
  *y = s.y;
  return HB_OK;
}

hb_status hb_dataset_meta_json(const hb_dataset* data, char** out) {
  HB_REQUIRE(data && out, "null argument");
  return guarded([&] {
    *out = dup_string(hbias::dataset_meta_json(data->data));
    return HB_OK;
  });
}

void hb_dataset_free(hb_dataset* data) { delete data; }

hb_status hb_config_from_json(const char* text, hb_config** out) {
  HB_REQUIRE(text && out, "null argument");
  return guarded([&] {
    *out = new hb_config{hbias::config_from_json_text(text)};
    return HB_OK;
  });
}

hb_status hb_config_load(const char* path, hb_config** out) {
  HB_REQUIRE(path && out, "null argument");
  return guarded([&] {
    *out = new hb_config{hbias::load_config(path)};
    return HB_OK;
  });
}

hb_status hb_config_to_json(const hb_config* cfg, char** out) {
  HB_REQUIRE(cfg && out, "null argument");
  return guarded([&] {
    *out = dup_string(hbias::config_to_json_text(cfg->config));
    return HB_OK;
  });
}

size_t hb_config_num_params(const hb_config* cfg) {
  return cfg ? cfg->config.spec.num_params() : 0;
}

void hb_config_free(hb_config* cfg) { delete cfg; }

hb_status hb_train(const hb_config* cfg, const hb_dataset* data, hb_trajectory** out) {
  HB_REQUIRE(cfg && data && out, "null argument");
  *out = nullptr;
  return guarded([&] {
    try {
      auto* t = new hb_trajectory{hbias::run(cfg->config, data->data)};
      t->last_finite_k = t->traj.config.iterations;
      *out = t;
      return HB_OK;
    } catch (const hbias::NumericalAbort& e) {
      *out = new hb_trajectory{e.partial(), e.last_finite_k()};
      return fail(HB_ERR_NUMERICAL, e.what());
    }
  });
}

hb_status hb_trajectory_write(const hb_trajectory* traj, const char* dir) {
  HB_REQUIRE(traj && dir, "null argument");
  return guarded([&] {
    hbias::write_trajectory(traj->traj, dir);
    return HB_OK;
  });
}

hb_status hb_trajectory_read(const char* dir, hb_trajectory** out) {
  HB_REQUIRE(dir && out, "null argument");
  return guarded([&] {
    auto* t = new hb_trajectory{hbias::read_trajectory(dir)};
    t->last_finite_k = t->traj.records.empty() ? 0 : t->traj.records.back().k;
    *out = t;
    return HB_OK;
  });
}

int hb_trajectory_k_sep(const hb_trajectory* traj, uint64_t* k_sep) {
  if (!traj || !traj->traj.k_sep) return 0;
  if (k_sep) *k_sep = *traj->traj.k_sep;
  return 1;
}

double hb_trajectory_final_margin(const hb_trajectory* traj) {
  if (!traj || traj->traj.records.empty()) return std::nan("");
  return traj->traj.final_margin();
}

size_t hb_trajectory_num_records(const hb_trajectory* traj) {
  return traj ? traj->traj.records.size() : 0;
}

size_t hb_trajectory_num_params(const hb_trajectory* traj) {
  return traj ? traj->traj.final_weights.size() : 0;
}

hb_status hb_trajectory_final_weights(const hb_trajectory* traj, double* out, size_t len) {
  HB_REQUIRE(traj && out, "null argument");
  if (len != traj->traj.final_weights.size())
    return fail(HB_ERR_DIMENSION, "buffer holds " + std::to_string(len) + " entries, need " +
                                      std::to_string(traj->traj.final_weights.size()));
  std::copy(traj->traj.final_weights.begin(), traj->traj.final_weights.end(), out);
  return HB_OK;
}

hb_status hb_trajectory_diagnostic_json(const hb_trajectory* traj, char** out) {
  HB_REQUIRE(traj && out, "null argument");
  return guarded([&] {
    nlohmann::json j;
    const auto& t = traj->traj;
    j["aborted"] = t.aborted;
    j["reason"] = t.abort_reason;
    j["last_finite_k"] = traj->last_finite_k;
    j["records"] = t.records.size();
    nlohmann::json w = nlohmann::json::array();
    for (double v : t.final_weights) w.push_back(hbias::format_double(v));
    j["last_finite_weights"] = w;
    if (!t.records.empty()) {
      const auto& r = t.records.back();
      j["last_record"] = {{"k", r.k},
                          {"norm_w", hbias::format_double(r.norm_w)},
                          {"normalized_margin", hbias::format_double(r.normalized_margin)},
                          {"log_loss", hbias::format_double(r.log_loss)}};
    }
    *out = dup_string(j.dump(2) + "\n");
    return HB_OK;
  });
}

void hb_trajectory_free(hb_trajectory* traj) { delete traj; }

hb_status hb_analyze(const hb_trajectory* traj, const hb_dataset* data,
                     const hb_analysis_options* opts, char** summary_json, char** analysis_csv) {
  HB_REQUIRE(traj && data, "null argument");
  return guarded([&] {
    hbias::AnalysisOptions o;
    if (opts) {
      if (opts->active_tol > 0.0) o.active_tol = opts->active_tol;
      if (opts->has_window) o.growth_window = hbias::Window{opts->window_lo, opts->window_hi};
    }
    const hbias::AnalysisSummary s = hbias::analyze(traj->traj, data->data, o);
    if (summary_json) *summary_json = dup_string(hbias::analysis_summary_json(s));
    if (analysis_csv) *analysis_csv = dup_string(hbias::analysis_to_csv(s));
    return HB_OK;
  });
}

hb_status hb_criticality(const hb_config* cfg, const double* w, size_t len, const hb_dataset* data,
                         double active_tol, char** out_json) {
  HB_REQUIRE(cfg && w && data && out_json, "null argument");
  return guarded([&] {
    if (len != cfg->config.spec.num_params())
      throw hbias::DimensionError("weights have " + std::to_string(len) + " entries, net has " +
                                  std::to_string(cfg->config.spec.num_params()));
    hbias::CriticalityOptions o;
    if (active_tol > 0.0) o.tol = active_tol;
    const auto rep = hbias::criticality_residual(cfg->config.spec, std::span<const double>(w, len),
                                                 data->data, cfg->config.kink, o);
    *out_json = dup_string(hbias::criticality_json(rep));
    return HB_OK;
  });
}

hb_status hb_flow(const hb_config* cfg, const hb_dataset* data, const double* u0, size_t len,
                  double step, double horizon, double tol, char** path_csv, int* converged,
                  double* final_residual) {
  HB_REQUIRE(cfg && data, "null argument");
  return guarded([&] {
    std::vector<double> start;
    if (u0) {
      if (len != cfg->config.spec.num_params())
        throw hbias::DimensionError("initial direction has " + std::to_string(len) +
                                    " entries, net has " +
                                    std::to_string(cfg->config.spec.num_params()));
      start.assign(u0, u0 + len);
    } else {
      start = hbias::initial_weights(cfg->config).data;
    }
    start = hbias::normalize(start);
    const auto res = hbias::euler_di_flow(cfg->config.spec, start, data->data, step, horizon, tol,
                                          cfg->config.kink);
    if (path_csv) *path_csv = dup_string(hbias::flow_to_csv(res));
    if (converged) *converged = res.converged ? 1 : 0;
    if (final_residual) *final_residual = res.final_residual;
    return HB_OK;
  });
}

hb_status hb_check_grad(const size_t* widths, size_t num_widths, const char* activation,
                        double slope, uint64_t seed, size_t cases, int inject_fault,
                        hb_grad_report* report) {
  HB_REQUIRE(widths && activation && report, "null argument");
  return guarded([&] {
    hbias::NetSpec spec;
    spec.widths.assign(widths, widths + num_widths);
    spec.activation = hbias::parse_activation(activation, slope);
    spec.validate();
    hbias::GradCheckOptions o;
    o.seed = seed;
    o.cases = cases;
    o.inject_fault = inject_fault != 0;
    const auto r = hbias::check_gradients(spec, o);
    report->cases = r.cases;
    report->fd_cases = r.fd_cases;
    report->max_euler_error = r.max_euler_error;
    report->max_homogeneity_error = r.max_homogeneity_error;
    report->max_fd_error = r.max_fd_error;
    report->passed = r.passed ? 1 : 0;
    return HB_OK;
  });
}

hb_status hb_timestamp(char** out) {
  HB_REQUIRE(out, "out is null");
  return guarded([&] {
    *out = dup_string(hbias::utc_timestamp());
    return HB_OK;
  });
}

hb_status hb_manifest_json(const char* config_path, const char* dataset_path,
                           const char* output_dir, const char* started_at, char** out) {
  HB_REQUIRE(config_path && dataset_path && output_dir && out, "null argument");
  return guarded([&] {
    auto m = hbias::make_manifest(config_path, dataset_path, output_dir);
    if (started_at) m.started_at = started_at;
    m.finished_at = hbias::utc_timestamp();
    *out = dup_string(hbias::manifest_json(m));
    return HB_OK;
  });
}

}  // extern "C"
