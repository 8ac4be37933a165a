#include "hbias/io.hpp"

#include <openssl/evp.h>

#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include "hbias/error.hpp"
#include "hbias/numeric.hpp"
#include "json.hpp"

namespace hbias {

using nlohmann::json;
namespace fs = std::filesystem;

double parse_double_field(const std::string& field) {
  if (field.empty()) throw IoError("empty numeric field");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (end != field.c_str() + field.size())
    throw IoError("not a number: '" + field + "'");
  return v;
}

namespace {

std::uint64_t parse_uint_field(const std::string& field) {
  if (field.empty() || field.find_first_not_of("0123456789") != std::string::npos)
    throw IoError("not a nonnegative integer: '" + field + "'");
  return std::stoull(field);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

// JSON has no NaN or infinity; those become strings.
json num(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

double get_num(const json& j) {
  if (j.is_string()) return parse_double_field(j.get<std::string>());
  return j.get<double>();
}

json doubles(std::span<const double> v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

template <typename T>
T field_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["net"] = {{"widths", c.spec.widths},
              {"activation", to_string(c.spec.activation)},
              {"slope", c.spec.activation.slope}};
  j["loss"] = to_string(c.loss);
  if (c.gamma.kind == StepSchedule::Kind::Constant)
    j["gamma"] = c.gamma.gamma0;
  else
    j["gamma"] = {{"schedule", "power"}, {"gamma0", c.gamma.gamma0}, {"beta", c.gamma.beta}};
  if (c.batch_size) j["batch_size"] = *c.batch_size;
  j["iterations"] = c.iterations;
  j["seed"] = c.seed;
  j["kink"] = c.kink.e;
  j["record_stride"] = c.record_stride;
  j["snapshot_stride"] = c.snapshot_stride;
  json init;
  init["scale"] = c.init.scale;
  if (c.init.target_norm) init["norm"] = *c.init.target_norm;
  if (!c.init.weights.empty()) init["weights"] = c.init.weights;
  j["init"] = init;
  j["separation_threshold"] = c.separation_threshold;
  j["separation_persistence"] = c.separation_persistence;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const char* known[] = {"net", "loss", "gamma", "batch_size", "iterations", "seed",
                                "kink", "record_stride", "snapshot_stride", "init",
                                "separation_threshold", "separation_persistence"};
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError("unknown config key '" + key + "'");
  }
  ExperimentConfig c;
  if (!j.contains("net")) throw ConfigError("config is missing 'net'");
  const json& net = j.at("net");
  c.spec.widths = net.at("widths").get<std::vector<std::size_t>>();
  c.spec.activation = parse_activation(field_or<std::string>(net, "activation", "relu"),
                                       field_or<double>(net, "slope", 0.0));
  c.loss = parse_loss(field_or<std::string>(j, "loss", "exp"));
  if (!j.contains("gamma")) throw ConfigError("config is missing 'gamma'");
  const json& g = j.at("gamma");
  if (g.is_number()) {
    c.gamma = StepSchedule::constant(g.get<double>());
  } else if (g.is_object()) {
    const std::string kind = field_or<std::string>(g, "schedule", "constant");
    if (kind == "constant")
      c.gamma = StepSchedule::constant(g.at("gamma0").get<double>());
    else if (kind == "power")
      c.gamma = StepSchedule::power(g.at("gamma0").get<double>(), field_or<double>(g, "beta", 1.0));
    else
      throw ConfigError("unknown step schedule '" + kind + "'");
  } else {
    throw ConfigError("'gamma' must be a number or an object");
  }
  if (j.contains("batch_size") && !j.at("batch_size").is_null())
    c.batch_size = j.at("batch_size").get<std::size_t>();
  c.iterations = field_or<std::uint64_t>(j, "iterations", c.iterations);
  c.seed = field_or<std::uint64_t>(j, "seed", c.seed);
  c.kink = j.contains("kink") ? KinkSelection{j.at("kink").get<double>()}
                              : default_kink(c.spec.activation);
  c.record_stride = field_or<std::uint64_t>(j, "record_stride", c.record_stride);
  c.snapshot_stride = field_or<std::uint64_t>(j, "snapshot_stride", c.snapshot_stride);
  if (j.contains("init")) {
    const json& in = j.at("init");
    c.init.scale = field_or<double>(in, "scale", c.init.scale);
    if (in.contains("norm")) c.init.target_norm = in.at("norm").get<double>();
    if (in.contains("weights")) c.init.weights = in.at("weights").get<std::vector<double>>();
  }
  c.separation_threshold = field_or<double>(j, "separation_threshold", c.separation_threshold);
  c.separation_persistence =
      field_or<std::size_t>(j, "separation_persistence", c.separation_persistence);
  c.validate();
  return c;
}

const char* kRecordHeader =
    "k,step_size,norm_w,normalized_margin,log_loss,log_gamma_tilde,log_gamma_bar,active_gap,"
    "log_sum_neg_deriv";

}  // namespace

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

fs::path resolve_output_dir(const fs::path& fallback) {
  const char* env = std::getenv("HBIAS_OUT_DIR");
  if (env && *env) return fs::path(env);
  return fallback;
}

ExperimentConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
}

ExperimentConfig load_config(const fs::path& path) { return config_from_json_text(read_file(path)); }

std::string config_to_json_text(const ExperimentConfig& config) {
  return config_to_json(config).dump(2) + "\n";
}

std::string records_to_csv(const std::vector<StepRecord>& records) {
  std::string out = std::string(kRecordHeader) + "\n";
  for (const auto& r : records) {
    out += std::to_string(r.k);
    for (double v : {r.step_size, r.norm_w, r.normalized_margin, r.log_loss, r.log_gamma_tilde,
                     r.log_gamma_bar, r.active_gap, r.log_sum_neg_deriv}) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

std::vector<StepRecord> records_from_csv(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines.front() != kRecordHeader) throw IoError("records.csv: bad header");
  std::vector<StepRecord> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split(lines[i], ',');
    if (f.size() != 9)
      throw IoError("records.csv line " + std::to_string(i + 1) + ": expected 9 fields");
    StepRecord r;
    r.k = parse_uint_field(f[0]);
    r.step_size = parse_double_field(f[1]);
    r.norm_w = parse_double_field(f[2]);
    r.normalized_margin = parse_double_field(f[3]);
    r.log_loss = parse_double_field(f[4]);
    r.log_gamma_tilde = parse_double_field(f[5]);
    r.log_gamma_bar = parse_double_field(f[6]);
    r.active_gap = parse_double_field(f[7]);
    r.log_sum_neg_deriv = parse_double_field(f[8]);
    out.push_back(r);
  }
  return out;
}

std::string snapshots_to_csv(const std::vector<Snapshot>& snapshots, std::size_t num_params) {
  std::string out = "k,batch";
  for (std::size_t j = 1; j <= num_params; ++j) out += ",w" + std::to_string(j);
  for (std::size_t j = 1; j <= num_params; ++j) out += ",next_w" + std::to_string(j);
  out += '\n';
  for (const auto& s : snapshots) {
    if (s.w.size() != num_params || s.w_next.size() != num_params)
      throw DimensionError("snapshot at k = " + std::to_string(s.k) + " has the wrong length");
    out += std::to_string(s.k) + ',';
    for (std::size_t j = 0; j < s.batch.size(); ++j) {
      if (j) out += ';';
      out += std::to_string(s.batch[j]);
    }
    for (double v : s.w) out += ',' + format_double(v);
    for (double v : s.w_next) out += ',' + format_double(v);
    out += '\n';
  }
  return out;
}

std::vector<Snapshot> snapshots_from_csv(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw IoError("snapshots.csv is empty");
  const auto header = split(lines.front(), ',');
  if (header.size() < 2 || header[0] != "k" || header[1] != "batch" || header.size() % 2 != 0)
    throw IoError("snapshots.csv: bad header");
  const std::size_t P = (header.size() - 2) / 2;
  std::vector<Snapshot> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split(lines[i], ',');
    if (f.size() != header.size())
      throw IoError("snapshots.csv line " + std::to_string(i + 1) + ": expected " +
                    std::to_string(header.size()) + " fields");
    Snapshot s;
    s.k = parse_uint_field(f[0]);
    for (const auto& b : split(f[1], ';')) s.batch.push_back(parse_uint_field(b));
    for (std::size_t j = 0; j < P; ++j) s.w.push_back(parse_double_field(f[2 + j]));
    for (std::size_t j = 0; j < P; ++j) s.w_next.push_back(parse_double_field(f[2 + P + j]));
    out.push_back(std::move(s));
  }
  return out;
}

void write_trajectory(const Trajectory& traj, const fs::path& dir) {
  fs::create_directories(dir);
  write_file(dir / "records.csv", records_to_csv(traj.records));
  write_file(dir / "snapshots.csv",
             snapshots_to_csv(traj.snapshots, traj.config.spec.num_params()));
  json j;
  j["config"] = config_to_json(traj.config);
  j["n"] = traj.n;
  j["k_sep"] = traj.k_sep ? json(*traj.k_sep) : json(nullptr);
  j["final_weights"] = doubles(traj.final_weights);
  j["final_margin"] = num(traj.records.empty() ? 0.0 : traj.final_margin());
  j["aborted"] = traj.aborted;
  j["abort_reason"] = traj.abort_reason;
  write_file(dir / "trajectory.json", j.dump(2) + "\n");
}

Trajectory read_trajectory(const fs::path& dir) {
  Trajectory t;
  json j;
  try {
    j = json::parse(read_file(dir / "trajectory.json"));
    t.config = config_from_json(j.at("config"));
    t.n = j.at("n").get<std::size_t>();
    if (!j.at("k_sep").is_null()) t.k_sep = j.at("k_sep").get<std::uint64_t>();
    for (const auto& v : j.at("final_weights")) t.final_weights.push_back(get_num(v));
    t.aborted = j.at("aborted").get<bool>();
    t.abort_reason = j.at("abort_reason").get<std::string>();
  } catch (const json::exception& e) {
    throw IoError("malformed trajectory.json: " + std::string(e.what()));
  }
  t.records = records_from_csv(read_file(dir / "records.csv"));
  if (fs::exists(dir / "snapshots.csv"))
    t.snapshots = snapshots_from_csv(read_file(dir / "snapshots.csv"));
  return t;
}

std::string dataset_meta_json(const Dataset& data) {
  json j;
  j["generator"] = data.meta.generator;
  j["seed"] = data.meta.seed;
  j["n"] = data.size();
  j["d"] = data.dim();
  j["normal"] = doubles(data.meta.normal);
  j["certified_margin"] =
      data.meta.certified_margin ? num(*data.meta.certified_margin) : json(nullptr);
  j["radius"] = num(data.meta.radius);
  if (data.meta.witness_spec) {
    j["witness"] = {{"widths", data.meta.witness_spec->widths},
                    {"activation", to_string(data.meta.witness_spec->activation)},
                    {"weights", doubles(data.meta.witness_weights)}};
  }
  return j.dump(2) + "\n";
}

void write_dataset(const Dataset& data, const fs::path& csv_path) {
  write_file(csv_path, to_csv(data));
  fs::path meta = csv_path;
  meta.replace_extension(".meta.json");
  write_file(meta, dataset_meta_json(data));
}

std::string analysis_to_csv(const AnalysisSummary& s) {
  std::string out =
      "k,norm_w,margin,gamma_bar,log_gamma_bar,norm_g_bar_s,norm_eta_bar,norm_r,"
      "reconstruction_error,criticality,field_gap\n";
  for (const auto& d : s.decomposition) {
    out += std::to_string(d.k);
    for (double v : {d.norm_w, d.margin, d.gamma_bar, d.log_gamma_bar, norm2(d.g_bar_s),
                     norm2(d.eta_bar), d.r ? norm2(*d.r) : std::nan(""), d.reconstruction_error,
                     d.criticality, d.field_gap})
      out += ',' + format_double(v);
    out += '\n';
  }
  return out;
}

namespace {

json claim_json(const ClaimResult& c) {
  return {{"status", to_string(c.status)}, {"detail", c.detail}};
}

json fit_json(const LinearFit& f) {
  return {{"slope", num(f.slope)},
          {"intercept", num(f.intercept)},
          {"r_squared", num(f.r_squared)},
          {"points", f.points}};
}

json eprime_json(const EPrimeCondition& c) {
  return {{"satisfied", c.satisfied}, {"trend_slope", num(c.trend_slope)}, {"detail", c.detail}};
}

}  // namespace

std::string analysis_summary_json(const AnalysisSummary& s) {
  json j;
  j["k_sep"] = s.k_sep ? json(*s.k_sep) : json(nullptr);
  if (s.growth) {
    const GrowthFit& g = *s.growth;
    j["growth_fit"] = {{"slope", num(g.slope)},         {"intercept", num(g.intercept)},
                       {"c1_hat", num(g.c1_hat)},       {"c2_hat", num(g.c2_hat)},
                       {"r_squared", num(g.r_squared)}, {"k_lo", g.window.k_lo},
                       {"k_hi", g.window.k_hi},         {"points", g.points},
                       {"growth_law_ok", g.growth_law_ok}};
  } else {
    j["growth_fit"] = nullptr;
  }
  j["log_loss_fit"] = s.log_loss_fit ? fit_json(*s.log_loss_fit) : json(nullptr);
  j["min_window_margin"] = num(s.min_window_margin);
  j["claim1"] = claim_json(s.claim1);
  j["claim2"] = claim_json(s.claim2);
  j["claim3"] = claim_json(s.claim3);
  j["claim4"] = claim_json(s.claim4);
  j["loss_decay"] = claim_json(s.loss_decay);
  j["gamma_violation_fraction"] = num(s.gamma_violation_fraction);
  j["gamma_power_fit"] = s.gamma_power_fit ? fit_json(*s.gamma_power_fit) : json(nullptr);
  j["last_decade_sum"] = num(s.last_decade_sum);
  j["previous_decade_sum"] = num(s.previous_decade_sum);
  j["remainder_first_quartile_max"] = num(s.remainder_first_quartile_max);
  j["remainder_last_quartile_max"] = num(s.remainder_last_quartile_max);
  j["max_reconstruction_error"] = num(s.max_reconstruction_error);
  j["max_tangency"] = num(s.max_tangency);
  j["final_margin"] = num(s.final_margin);
  j["margin_oscillation"] = num(s.margin_oscillation);
  j["final_residual"] = num(s.final_residual);
  j["final_kkt_residual"] = s.final_kkt_residual ? num(*s.final_kkt_residual) : json(nullptr);
  json residuals = json::array();
  for (const auto& d : s.decomposition) residuals.push_back({{"k", d.k}, {"residual", num(d.criticality)}});
  j["residual_series"] = residuals;
  j["eprime"] = {{"k_lo", s.eprime.window.k_lo},
                 {"k_hi", s.eprime.window.k_hi},
                 {"norm_diverges", eprime_json(s.eprime.norm_diverges)},
                 {"scaled_deriv_vanishes", eprime_json(s.eprime.scaled_deriv_vanishes)},
                 {"margin_above_q0", eprime_json(s.eprime.margin_above_q0)}};
  j["warnings"] = s.warnings;
  return j.dump(2) + "\n";
}

std::string criticality_json(const CriticalityReport& r) {
  json j;
  j["active"] = {{"indices", r.active.indices}, {"tol", num(r.active.tol)},
                 {"margin", num(r.active.margin)}};
  json gens = json::array();
  for (const auto& g : r.generators) gens.push_back(doubles(g));
  j["generators"] = gens;
  j["generator_owner"] = r.generator_owner;
  j["min_norm_point"] = doubles(r.min_norm_point);
  j["residual"] = num(r.residual);
  j["hull_weights"] = doubles(r.hull_weights);
  j["kkt_residual"] = r.kkt_residual ? num(*r.kkt_residual) : json(nullptr);
  j["converged"] = r.converged;
  j["under_approximated"] = r.under_approximated;
  j["certificate"] = r.certificate;
  j["field"] = r.field;
  return j.dump(2) + "\n";
}

std::string flow_to_csv(const FlowResult& flow) {
  const std::size_t d = flow.path.empty() ? 0 : flow.path.front().u.size();
  std::string out = "t";
  for (std::size_t j = 1; j <= d; ++j) out += ",u" + std::to_string(j);
  out += ",margin,residual\n";
  for (const auto& p : flow.path) {
    out += format_double(p.t);
    for (double v : p.u) out += ',' + format_double(v);
    out += ',' + format_double(p.margin) + ',' + format_double(p.residual) + '\n';
  }
  return out;
}

std::string git_blob_hash(const std::string& content) {
  const std::string head = "blob " + std::to_string(content.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw IoError("cannot allocate a digest context");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, head.data(), head.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw IoError("SHA-1 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    const unsigned char c = digest[i];
    out += hex[c >> 4];
    out += hex[c & 15];
  }
  return out;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunManifest make_manifest(const std::string& config_path, const std::string& dataset_path,
                          const std::string& output_dir) {
  RunManifest m;
  m.config_path = config_path;
  m.dataset_path = dataset_path;
  m.output_dir = output_dir;
  m.config_hash = git_blob_hash(read_file(config_path));
  m.dataset_hash = git_blob_hash(read_file(dataset_path));
  m.input_hash = git_blob_hash(m.config_hash + "\n" + m.dataset_hash);
  m.started_at = utc_timestamp();
  return m;
}

std::string manifest_json(const RunManifest& m) {
  json j;
  j["config_path"] = m.config_path;
  j["dataset_path"] = m.dataset_path;
  j["output_dir"] = m.output_dir;
  j["config_hash"] = m.config_hash;
  j["dataset_hash"] = m.dataset_hash;
  j["input_hash"] = m.input_hash;
  j["started_at"] = m.started_at;
  j["finished_at"] = m.finished_at;
  j["version"] = m.version;
  j["modules"] = {{"net_core", m.version},  {"losses", m.version},
                  {"optimizer", m.version}, {"dynamics_analysis", m.version},
                  {"criticality", m.version}, {"datasets", m.version},
                  {"cli", m.version}};
  return j.dump(2) + "\n";
}

}  // namespace hbias
