#include "fsp/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace fsp {

using nlohmann::json;

std::string to_string(RunMode mode) {
  switch (mode) {
    case RunMode::Fsp: return "fsp";
    case RunMode::Fhp: return "fhp";
    case RunMode::Both: return "both";
  }
  return "unknown";
}

RunMode parse_mode(const std::string& text) {
  if (text == "fsp") return RunMode::Fsp;
  if (text == "fhp") return RunMode::Fhp;
  if (text == "both") return RunMode::Both;
  throw ConfigError("mode must be fsp, fhp or both, got: " + text);
}

std::string fmt17(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

struct FrameObservations {
  // object id -> 4 corner pixels; only objects with all four corners present.
  std::map<std::int64_t, std::array<Pixel, 4>> full;
};

FrameObservations collect_full_observations(const FrameRecord& frame) {
  std::map<std::int64_t, std::array<std::optional<Pixel>, 4>> partial;
  for (const CornerObservation& o : frame.observations) {
    if (o.corner_j < 1 || o.corner_j > 4) continue;
    partial[o.object_id][o.corner_j - 1] = o.pixel;
  }
  FrameObservations out;
  for (const auto& [id, corners] : partial) {
    if (corners[0] && corners[1] && corners[2] && corners[3])
      out.full[id] = {*corners[0], *corners[1], *corners[2], *corners[3]};
  }
  return out;
}

struct LandmarkVars {
  int anchor_frame = 0;
  int observation_frames = 0;
  VariableId fsp_var;                 // fsp mode
  std::array<VariableId, 4> fhp_vars; // fhp mode
};

struct Builder {
  Builder(const MeasurementLog& log_in, const SensorSpec& sensors_in, RunMode mode_in,
          const PipelineOptions& options_in)
      : log(log_in), sensors(sensors_in), mode(mode_in), options(options_in) {}

  const MeasurementLog& log;
  const SensorSpec& sensors;
  RunMode mode;
  const PipelineOptions& options;

  FactorGraph graph;
  std::vector<VariableId> pose_vars;
  std::vector<VariableId> bias_vars;
  std::map<std::int64_t, LandmarkVars> landmarks;
  std::vector<Preintegrated> pres;  // per consecutive frame interval
  Vec3 gravity = Vec3::Zero();
  Mat8 info_px8 = Mat8::Identity();
  Mat2 info_px2 = Mat2::Identity();

  // Dead-reckoning state used to seed new pose variables.
  Vec3 velocity = Vec3::Zero();
  ImuBias bias_estimate;

  void preintegrate_intervals() {
    const ImuNoise noise{sensors.imu.sigma_accel, sensors.imu.sigma_gyro};
    pres.reserve(log.frames.size());
    std::size_t lo = 0;
    for (std::size_t f = 0; f + 1 < log.frames.size(); ++f) {
      const double ta = log.frames[f].t;
      const double tb = log.frames[f + 1].t;
      while (lo < log.imu.size() && log.imu[lo].t < ta - 1e-9) ++lo;
      std::size_t hi = lo;
      while (hi < log.imu.size() && log.imu[hi].t <= tb + 1e-9) ++hi;
      if (hi - lo < 2)
        throw SolverError("imu stream does not cover frame interval " + std::to_string(f));
      pres.push_back(preintegrate(
          std::span<const ImuSample>(log.imu.data() + lo, hi - lo), ImuBias{}, noise));
      lo = hi - 1;  // boundary sample belongs to both intervals
    }
  }

  Mat6 walk_information(double dt) const {
    Mat6 info = Mat6::Zero();
    const double var_a = options.sigma_walk_accel * options.sigma_walk_accel * dt;
    const double var_g = options.sigma_walk_gyro * options.sigma_walk_gyro * dt;
    info.block<3, 3>(0, 0) = Mat3::Identity() / var_a;
    info.block<3, 3>(3, 3) = Mat3::Identity() / var_g;
    return info;
  }

  void add_frame(std::size_t f) {
    if (f == 0) {
      pose_vars.push_back(graph.add_pose_variable(log.frames[0].gt_pose));
      graph.fix_variable(pose_vars[0]);
      velocity = options.initial_velocity;
    } else {
      const Pose& prev = graph.pose(pose_vars[f - 1]);
      const Preintegrated& pre = pres[f - 1];
      Pose guess;
      guess.translation = prev.translation + velocity * pre.dt +
                          0.5 * gravity * pre.dt * pre.dt +
                          prev.rotation * pre.corrected_delta_p(bias_estimate);
      guess.rotation = prev.rotation * pre.corrected_delta_r(bias_estimate);
      velocity += gravity * pre.dt + prev.rotation * pre.corrected_delta_v(bias_estimate);
      pose_vars.push_back(graph.add_pose_variable(guess));
    }
    bias_vars.push_back(graph.add_bias_variable(bias_estimate));

    if (f >= 1) {
      graph.add_factor(BiasWalkFactor{bias_vars[f - 1], bias_vars[f],
                                      walk_information(pres[f - 1].dt)});
    }
    if (f >= 2) {
      ImuTernaryFactor factor;
      factor.pose_a = pose_vars[f - 2];
      factor.pose_b = pose_vars[f - 1];
      factor.pose_c = pose_vars[f];
      factor.bias = bias_vars[f - 2];
      factor.pre1 = pres[f - 2];
      factor.pre2 = pres[f - 1];
      factor.gravity = gravity;
      factor.information = ternary_information(pres[f - 2], pres[f - 1]);
      graph.add_factor(std::move(factor));
    }

    const FrameObservations obs = collect_full_observations(log.frames[f]);
    for (const auto& [id, pixels] : obs.full) {
      auto it = landmarks.find(id);
      if (it == landmarks.end()) {
        LandmarkVars lv;
        lv.anchor_frame = static_cast<int>(f);
        if (mode == RunMode::Fsp) {
          FspRect init;
          try {
            init = init_fsp_from_single_view(sensors.camera.intrinsics, pixels,
                                             options.omega0);
          } catch (const DegenerateView&) {
            continue;  // try again at the next observation
          }
          init.anchor_id = pose_vars[f].index();
          lv.fsp_var = graph.add_fsp_variable(init);
        } else {
          for (int j = 0; j < 4; ++j) {
            FhpPoint p = init_fhp_from_pixel(sensors.camera.intrinsics, pixels[j],
                                             options.omega0);
            p.anchor_id = pose_vars[f].index();
            lv.fhp_vars[j] = graph.add_fhp_variable(p);
          }
        }
        it = landmarks.emplace(id, lv).first;
      }
      LandmarkVars& lv = it->second;
      ++lv.observation_frames;
      const VariableId anchor = pose_vars[lv.anchor_frame];
      if (mode == RunMode::Fsp) {
        graph.add_factor(FspReprojectionFactor{pose_vars[f], anchor, lv.fsp_var,
                                               sensors.camera.intrinsics, pixels,
                                               info_px8});
      } else {
        for (int j = 0; j < 4; ++j) {
          graph.add_factor(FhpReprojectionFactor{pose_vars[f], anchor, lv.fhp_vars[j],
                                                 sensors.camera.intrinsics, pixels[j],
                                                 info_px2});
        }
      }
    }
  }

  void resync_state(std::size_t f) {
    bias_estimate = graph.bias(bias_vars[f]);
    if (f >= 1) {
      const Pose& pa = graph.pose(pose_vars[f - 1]);
      const Pose& pb = graph.pose(pose_vars[f]);
      const Preintegrated& pre = pres[f - 1];
      velocity = velocity_from_poses(pa, pb, pre, bias_estimate, gravity) +
                 gravity * pre.dt + pa.rotation * pre.corrected_delta_v(bias_estimate);
    }
  }
};

double sigma_px_effective(double sigma_px) { return sigma_px > 0 ? sigma_px : 1.0; }

}  // namespace

ModeResult run_mode(const MeasurementLog& log, const SensorSpec& sensors, RunMode mode,
                    const PipelineOptions& options) {
  if (mode == RunMode::Both)
    throw ConfigError("run_mode expects a single parameterization");
  if (log.frames.empty()) throw ConfigError("measurement log has no frames");
  if (options.incremental_every < 0)
    throw ConfigError("incremental interval must be at least 1 (or 0 to disable)");
  if (options.omega0 <= 0) throw ConfigError("omega0 must be positive");

  const auto t_start = std::chrono::steady_clock::now();

  Builder b{log, sensors, mode, options};
  b.gravity = log.world_gt.gravity;
  const double sp = sigma_px_effective(sensors.sigma_px);
  b.info_px8 = Mat8::Identity() / (sp * sp);
  b.info_px2 = Mat2::Identity() / (sp * sp);
  b.preintegrate_intervals();

  const int every = options.incremental_every;
  for (std::size_t f = 0; f < log.frames.size(); ++f) {
    b.add_frame(f);
    if (every > 0 && f > 0 && f % static_cast<std::size_t>(every) == 0) {
      try {
        b.graph.optimize(options.warmup);
      } catch (const SingularHessian&) {
        // Early graphs can be momentarily underconstrained; keep collecting.
      }
      b.resync_state(f);
    }
  }

  ModeResult result;
  result.mode = mode;
  try {
    result.opt = b.graph.optimize(options.optimizer);
  } catch (const SingularHessian& e) {
    throw SolverError(e.what());
  }

  for (std::size_t f = 0; f < log.frames.size(); ++f) {
    result.frame_times.push_back(log.frames[f].t);
    result.est_poses.push_back(b.graph.pose(b.pose_vars[f]));
    result.gt_poses.push_back(log.frames[f].gt_pose);
  }

  std::map<std::int64_t, std::array<Vec3, 4>> est_corners;
  std::map<std::int64_t, RectDims> est_dims;
  for (const auto& [id, lv] : b.landmarks) {
    LandmarkEstimate est;
    est.object_id = id;
    est.anchor_frame = lv.anchor_frame;
    est.observation_frames = lv.observation_frames;
    est.low_parallax = lv.observation_frames < 3;
    const Pose& anchor = b.graph.pose(b.pose_vars[lv.anchor_frame]);
    if (mode == RunMode::Fsp) {
      const FspRect& l = b.graph.fsp(lv.fsp_var);
      est.corners = fsp_corners_world(anchor, l);
      est.origin = est.corners[0];
      est.dims = fsp_dims(l);
      est_dims[id] = *est.dims;
    } else {
      for (int j = 0; j < 4; ++j)
        est.corners[j] = fhp_point_world(anchor, b.graph.fhp(lv.fhp_vars[j]));
      est.origin = est.corners[0];
    }
    est_corners[id] = est.corners;
    result.landmarks.push_back(est);
  }

  result.relpose = relative_pose_error(result.est_poses, result.gt_poses, result.frame_times);
  result.corner_errs = corner_errors(est_corners, log.world_gt);
  if (mode == RunMode::Fsp) result.dim_errs = dim_errors(est_dims, log.world_gt);

  result.variable_count = b.graph.variable_count();
  result.factor_count = b.graph.factors().size();
  result.graph_dimension = b.graph.dimension();
  result.landmark_dimension = b.graph.dimension_of_kind(VarKind::Fsp) +
                              b.graph.dimension_of_kind(VarKind::Fhp);
  result.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

// ---------------------------------------------------------------------------
// Output files

namespace {

json summary_to_json(const MetricSummary& s) {
  return json{{"median", s.median}, {"mean", s.mean}, {"max", s.max}, {"count", s.count}};
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

void finish_output(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw ConfigError("failed while writing " + path.string());
}

void write_poses_csv(const std::filesystem::path& path, const ModeResult& r) {
  std::ofstream out = open_output(path);
  out << "t,px,py,pz,qw,qx,qy,qz\n";
  for (std::size_t i = 0; i < r.est_poses.size(); ++i) {
    const Pose& p = r.est_poses[i];
    const auto& q = p.rotation.quaternion();
    out << fmt17(r.frame_times[i]) << ',' << fmt17(p.translation.x()) << ','
        << fmt17(p.translation.y()) << ',' << fmt17(p.translation.z()) << ','
        << fmt17(q.w()) << ',' << fmt17(q.x()) << ',' << fmt17(q.y()) << ','
        << fmt17(q.z()) << '\n';
  }
  finish_output(out, path);
}

void write_relpose_csv(const std::filesystem::path& path,
                       const std::vector<RelPoseError>& errors) {
  std::ofstream out = open_output(path);
  out << "t,trans_err_m,rot_err_rad\n";
  for (const RelPoseError& e : errors)
    out << fmt17(e.t) << ',' << fmt17(e.translation_m) << ',' << fmt17(e.rotation_rad)
        << '\n';
  finish_output(out, path);
}

void write_corners_csv(const std::filesystem::path& path,
                       const std::vector<CornerError>& errors) {
  std::ofstream out = open_output(path);
  out << "object_id,corner_j,err_m\n";
  for (const CornerError& e : errors)
    out << e.object_id << ',' << e.corner_j << ',' << fmt17(e.error_m) << '\n';
  finish_output(out, path);
}

void write_dims_csv(const std::filesystem::path& path, const std::vector<DimError>& errors) {
  std::ofstream out = open_output(path);
  out << "object_id,w_err_m,h_err_m,w_est,h_est\n";
  for (const DimError& e : errors)
    out << e.object_id << ',' << fmt17(e.width_err_m) << ',' << fmt17(e.height_err_m)
        << ',' << fmt17(e.width_est) << ',' << fmt17(e.height_est) << '\n';
  finish_output(out, path);
}

std::vector<double> collect(const std::vector<RelPoseError>& v, bool rotation) {
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) out.push_back(rotation ? e.rotation_rad : e.translation_m);
  return out;
}

json report_to_json(const ModeResult& r, const PipelineOptions& options,
                    std::uint64_t seed) {
  std::vector<double> corner;
  for (const auto& e : r.corner_errs) corner.push_back(e.error_m);
  std::vector<double> werr, herr;
  for (const auto& e : r.dim_errs) {
    werr.push_back(e.width_err_m);
    herr.push_back(e.height_err_m);
  }

  json landmarks = json::array();
  for (const LandmarkEstimate& l : r.landmarks) {
    landmarks.push_back(json{{"id", l.object_id},
                             {"anchor_frame", l.anchor_frame},
                             {"observation_frames", l.observation_frames},
                             {"low_parallax", l.low_parallax}});
  }

  json metrics{
      {"relpose_translation_m", summary_to_json(summarize(collect(r.relpose, false)))},
      {"relpose_rotation_rad", summary_to_json(summarize(collect(r.relpose, true)))},
      {"corner_error_m", summary_to_json(summarize(corner))}};
  if (r.mode == RunMode::Fsp) {
    metrics["width_error_m"] = summary_to_json(summarize(werr));
    metrics["height_error_m"] = summary_to_json(summarize(herr));
  }

  return json{{"mode", to_string(r.mode)},
              {"converged", r.opt.converged()},
              {"stop_reason", to_string(r.opt.reason)},
              {"iterations", r.opt.iterations},
              {"initial_cost", r.opt.initial_cost},
              {"final_cost", r.opt.final_cost},
              {"counters",
               {{"variables", r.variable_count},
                {"factors", r.factor_count},
                {"graph_dimension", r.graph_dimension},
                {"landmark_dimension", r.landmark_dimension},
                {"skipped_evaluations", r.opt.skipped_evaluations},
                {"invalid_at_convergence", r.opt.invalid_at_convergence},
                {"unconstrained_dimensions", r.opt.unconstrained_dimensions}}},
              {"metrics", metrics},
              {"landmarks", landmarks},
              {"omega0", options.omega0},
              {"incremental_every", options.incremental_every},
              {"seed", seed},
              {"wall_time_s", r.wall_time_s}};
}

void write_landmarks_json(const std::filesystem::path& path, const ModeResult& r) {
  json landmarks = json::array();
  for (const LandmarkEstimate& l : r.landmarks) {
    json corners = json::array();
    for (const Vec3& c : l.corners)
      corners.push_back(json::array({c.x(), c.y(), c.z()}));
    json entry{{"id", l.object_id},
               {"anchor_frame", l.anchor_frame},
               {"observation_frames", l.observation_frames},
               {"low_parallax", l.low_parallax},
               {"origin", json::array({l.origin.x(), l.origin.y(), l.origin.z()})},
               {"corners", corners}};
    if (l.dims) entry["dims"] = json{{"w", l.dims->w}, {"h", l.dims->h}};
    landmarks.push_back(entry);
  }
  std::ofstream out = open_output(path);
  out << json{{"mode", to_string(r.mode)}, {"landmarks", landmarks}}.dump(2) << "\n";
  finish_output(out, path);
}

void write_mode_outputs(const std::filesystem::path& dir, const ModeResult& r,
                        const PipelineOptions& options, std::uint64_t seed) {
  const std::string m = to_string(r.mode);
  write_poses_csv(dir / ("poses_" + m + ".csv"), r);
  write_relpose_csv(dir / ("relpose_" + m + ".csv"), r.relpose);
  write_corners_csv(dir / ("corners_" + m + ".csv"), r.corner_errs);
  if (r.mode == RunMode::Fsp) write_dims_csv(dir / "dims_fsp.csv", r.dim_errs);
  write_landmarks_json(dir / ("landmarks_" + m + ".json"), r);
  const auto report_path = dir / ("report_" + m + ".json");
  std::ofstream report = open_output(report_path);
  report << report_to_json(r, options, seed).dump(2) << "\n";
  finish_output(report, report_path);
}

}  // namespace

RunSummary run_pipeline(const RunConfig& config) {
  Scenario scenario = load_scenario(config.scenario_path);
  if (config.seed_override) scenario.seed = *config.seed_override;

  std::error_code ec;
  std::filesystem::create_directories(config.out_dir, ec);
  if (ec) throw ConfigError("cannot create output directory: " + config.out_dir.string());

  MeasurementLog log;
  if (config.log_path) {
    log = load_log(*config.log_path);
  } else {
    log = simulate(scenario);
  }
  save_log(log, config.out_dir / "measurements.jsonl");

  RunSummary summary;
  std::vector<RunMode> modes;
  if (config.mode == RunMode::Both) {
    modes = {RunMode::Fsp, RunMode::Fhp};
  } else {
    modes = {config.mode};
  }
  for (RunMode mode : modes) {
    ModeResult r = run_mode(log, scenario.sensors, mode, config.options);
    summary.all_converged = summary.all_converged && r.opt.converged();
    write_mode_outputs(config.out_dir, r, config.options, scenario.seed);
    summary.results.push_back(std::move(r));
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Metric re-emission from a stored run directory

namespace {

std::vector<Pose> read_poses_csv(const std::filesystem::path& path,
                                 std::vector<double>* times) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::vector<Pose> poses;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::array<double, 8> f{};
    std::string cell;
    for (double& v : f) {
      if (!std::getline(ss, cell, ',')) throw ConfigError("bad poses CSV row");
      v = std::stod(cell);
    }
    if (times) times->push_back(f[0]);
    Pose p;
    p.translation = Vec3(f[1], f[2], f[3]);
    p.rotation = Rotation(Eigen::Quaterniond(f[4], f[5], f[6], f[7]));
    poses.push_back(p);
  }
  return poses;
}

}  // namespace

void reemit_metrics(const std::filesystem::path& run_dir) {
  const MeasurementLog log = load_log(run_dir / "measurements.jsonl");
  std::vector<Pose> gt_poses;
  std::vector<double> gt_times;
  for (const FrameRecord& f : log.frames) {
    gt_poses.push_back(f.gt_pose);
    gt_times.push_back(f.t);
  }

  bool any = false;
  for (const std::string m : {"fsp", "fhp"}) {
    const auto poses_path = run_dir / ("poses_" + m + ".csv");
    const auto landmarks_path = run_dir / ("landmarks_" + m + ".json");
    if (!std::filesystem::exists(poses_path) || !std::filesystem::exists(landmarks_path))
      continue;
    any = true;

    std::vector<double> times;
    const std::vector<Pose> est = read_poses_csv(poses_path, &times);
    write_relpose_csv(run_dir / ("relpose_" + m + ".csv"),
                      relative_pose_error(est, gt_poses, times));

    std::ifstream in(landmarks_path);
    json j = json::parse(in);
    std::map<std::int64_t, std::array<Vec3, 4>> corners;
    std::map<std::int64_t, RectDims> dims;
    for (const auto& l : j.at("landmarks")) {
      const std::int64_t id = l.at("id").get<std::int64_t>();
      std::array<Vec3, 4> c;
      for (int k = 0; k < 4; ++k) {
        const auto& arr = l.at("corners")[k];
        c[k] = Vec3(arr[0].get<double>(), arr[1].get<double>(), arr[2].get<double>());
      }
      corners[id] = c;
      if (l.contains("dims"))
        dims[id] = {l["dims"].at("w").get<double>(), l["dims"].at("h").get<double>()};
    }
    write_corners_csv(run_dir / ("corners_" + m + ".csv"), corner_errors(corners, log.world_gt));
    if (m == "fsp" && !dims.empty())
      write_dims_csv(run_dir / "dims_fsp.csv", dim_errors(dims, log.world_gt));
  }
  if (!any) throw ConfigError("no run outputs found in " + run_dir.string());
}

}  // namespace fsp
