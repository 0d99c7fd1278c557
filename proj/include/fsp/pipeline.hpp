#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "fsp/eval.hpp"
#include "fsp/factor_graph.hpp"
#include "fsp/simulator.hpp"

namespace fsp {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct SolverError : std::runtime_error {
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

enum class RunMode { Fsp, Fhp, Both };

std::string to_string(RunMode mode);
RunMode parse_mode(const std::string& text);  // throws ConfigError

struct PipelineOptions {
  double omega0 = 0.5;         // inverse-depth seed for new landmarks, 1/m
  int incremental_every = 0;   // optimize the growing graph every N frames; 0 = batch only
  OptimizerConfig optimizer;
  OptimizerConfig warmup{.max_iterations = 8};
  Vec3 initial_velocity = Vec3::Zero();
  double sigma_walk_accel = 1e-4;  // bias random walk, m/s^2 per sqrt(s)
  double sigma_walk_gyro = 1e-5;   // rad/s per sqrt(s)
};

struct LandmarkEstimate {
  std::int64_t object_id = 0;
  int anchor_frame = 0;
  int observation_frames = 0;
  bool low_parallax = false;  // observed in fewer than 3 frames
  Vec3 origin = Vec3::Zero();
  std::array<Vec3, 4> corners{};
  std::optional<RectDims> dims;  // rectangle landmarks only
};

struct ModeResult {
  RunMode mode = RunMode::Fsp;
  OptimizeReport opt;
  std::vector<double> frame_times;
  std::vector<Pose> est_poses;
  std::vector<Pose> gt_poses;
  std::vector<LandmarkEstimate> landmarks;
  std::vector<RelPoseError> relpose;
  std::vector<CornerError> corner_errs;
  std::vector<DimError> dim_errs;
  std::size_t variable_count = 0;
  std::size_t factor_count = 0;
  int graph_dimension = 0;
  int landmark_dimension = 0;
  double wall_time_s = 0;
};

/// Builds the factor graph for one parameterization from a measurement log and
/// optimizes it. One pose and one bias variable per frame, the first pose
/// fixed at the log's ground-truth start; landmarks are created at their first
/// full observation with the anchor shared with that frame's pose variable.
ModeResult run_mode(const MeasurementLog& log, const SensorSpec& sensors, RunMode mode,
                    const PipelineOptions& options);

struct RunConfig {
  std::filesystem::path scenario_path;
  std::optional<std::filesystem::path> log_path;  // reuse an existing log
  RunMode mode = RunMode::Both;
  std::filesystem::path out_dir;
  PipelineOptions options;
  std::optional<std::uint64_t> seed_override;
};

struct RunSummary {
  std::vector<ModeResult> results;
  bool all_converged = true;
};

/// Full driver: simulate (or load) the measurement log, run the requested
/// mode(s) on the same log, and write per-mode CSV/JSON outputs plus the log
/// itself into out_dir.
RunSummary run_pipeline(const RunConfig& config);

/// Recomputes and rewrites the metric CSVs of a previous run directory from
/// its stored log, trajectory and landmark estimates.
void reemit_metrics(const std::filesystem::path& run_dir);

/// Formats a double with 17 significant digits (round-trip exact).
std::string fmt17(double v);

}  // namespace fsp
