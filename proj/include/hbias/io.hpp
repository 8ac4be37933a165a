#pragma once

// File formats. Every float is written with 17 significant digits so that
// doubles survive a write/read cycle bit for bit.
//
// Experiment config (JSON):
//   {
//     "net":  {"widths": [2, 16, 1], "activation": "relu", "slope": 0.0},
//     "loss": "exp" | "logistic" | "exp_pow:a" | "logistic_pow:a",
//     "gamma": 0.1  or  {"schedule": "power", "gamma0": 0.1, "beta": 1.0},
//     "batch_size": 10,            (optional, omitted = full batch)
//     "iterations": 100000,
//     "seed": 0,
//     "kink": 0.0,                 (optional, default lower end of the kink)
//     "record_stride": 1, "snapshot_stride": 1000,
//     "init": {"scale": 0.1, "norm": 1.0, "weights": [...]}   (all optional)
//   }
//
// records.csv columns:
//   k,step_size,norm_w,normalized_margin,log_loss,log_gamma_tilde,
//   log_gamma_bar,active_gap,log_sum_neg_deriv
// snapshots.csv columns: k,batch,w1..wP,next_w1..next_wP where batch is the
//   ';'-separated sorted index list.
// trajectory.json: config, n, k_sep, final_weights, aborted, abort_reason.

#include <cstdint>
#include <filesystem>
#include <string>

#include "hbias/criticality.hpp"
#include "hbias/datasets.hpp"
#include "hbias/dynamics.hpp"
#include "hbias/optimizer.hpp"

namespace hbias {

inline constexpr const char* kVersion = "1.0.0";

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

// Output directory: $HBIAS_OUT_DIR when set and nonempty, else `fallback`.
std::filesystem::path resolve_output_dir(const std::filesystem::path& fallback);

ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json_text(const ExperimentConfig& config);

std::string records_to_csv(const std::vector<StepRecord>& records);
std::vector<StepRecord> records_from_csv(const std::string& text);
std::string snapshots_to_csv(const std::vector<Snapshot>& snapshots, std::size_t num_params);
std::vector<Snapshot> snapshots_from_csv(const std::string& text);

// records.csv, snapshots.csv and trajectory.json inside dir.
void write_trajectory(const Trajectory& traj, const std::filesystem::path& dir);
Trajectory read_trajectory(const std::filesystem::path& dir);

std::string dataset_meta_json(const Dataset& data);
// CSV plus "<stem>.meta.json" next to it.
void write_dataset(const Dataset& data, const std::filesystem::path& csv_path);

std::string analysis_to_csv(const AnalysisSummary& summary);
std::string analysis_summary_json(const AnalysisSummary& summary);
std::string criticality_json(const CriticalityReport& report);
std::string flow_to_csv(const FlowResult& flow);

// SHA-1 of "blob <size>\0<content>", as git computes object ids.
std::string git_blob_hash(const std::string& content);

struct RunManifest {
  std::string config_path;
  std::string dataset_path;
  std::string output_dir;
  std::string config_hash;
  std::string dataset_hash;
  std::string input_hash;  // blob hash of config_hash + "\n" + dataset_hash
  std::string started_at;  // UTC, ISO 8601
  std::string finished_at;
  std::string version = kVersion;
};

RunManifest make_manifest(const std::string& config_path, const std::string& dataset_path,
                          const std::string& output_dir);
std::string manifest_json(const RunManifest& m);
std::string utc_timestamp();

}  // namespace hbias
