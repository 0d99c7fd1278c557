#include "fsp/simulator.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace fsp {

using nlohmann::json;

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

// splitmix64, used to derive decorrelated sub-seeds for the camera and IMU
// noise streams from the scenario seed.
std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

std::array<Vec3, 4> RectObject::corners_world() const {
  const auto pts = rect_structural_points({width, height});
  std::array<Vec3, 4> out;
  for (int j = 0; j < 4; ++j) out[j] = pose * pts[j];
  return out;
}

Vec3 RectObject::center_world() const {
  return pose * Vec3(0.5 * width, 0.5 * height, 0);
}

double AxisProfile::value(double t) const {
  double v = offset;
  for (const Sinusoid& s : terms) v += s.amplitude * std::sin(kTwoPi * s.frequency_hz * t + s.phase);
  return v;
}

double AxisProfile::first_derivative(double t) const {
  double v = 0;
  for (const Sinusoid& s : terms) {
    const double w = kTwoPi * s.frequency_hz;
    v += s.amplitude * w * std::cos(w * t + s.phase);
  }
  return v;
}

double AxisProfile::second_derivative(double t) const {
  double v = 0;
  for (const Sinusoid& s : terms) {
    const double w = kTwoPi * s.frequency_hz;
    v -= s.amplitude * w * w * std::sin(w * t + s.phase);
  }
  return v;
}

TrajectorySample sample_trajectory(const TrajectorySpec& spec, double t) {
  if (t < 0 || t > spec.duration_s + 1e-12)
    throw std::out_of_range("sample_trajectory: t outside [0, duration]");

  TrajectorySample out;
  out.pose.translation = Vec3(spec.x.value(t), spec.y.value(t), spec.z.value(t));
  out.velocity = Vec3(spec.x.first_derivative(t), spec.y.first_derivative(t),
                      spec.z.first_derivative(t));
  out.acceleration = Vec3(spec.x.second_derivative(t), spec.y.second_derivative(t),
                          spec.z.second_derivative(t));

  // Camera axes at yaw 0 (tilt 0): x right = -world y, y down = -world z,
  // z optical = +world x.
  Mat3 base;
  base << 0, 0, 1,
          -1, 0, 0,
          0, -1, 0;
  const double tilt = spec.camera_tilt_rad;
  Mat3 rx;
  rx << 1, 0, 0,
        0, std::cos(tilt), -std::sin(tilt),
        0, std::sin(tilt), std::cos(tilt);
  const double psi = spec.yaw.value(t);
  Mat3 rz;
  rz << std::cos(psi), -std::sin(psi), 0,
        std::sin(psi), std::cos(psi), 0,
        0, 0, 1;
  out.pose.rotation = Rotation(Mat3(rz * base * rx));

  // R(t) = Rz(yaw(t)) * const, so the body rate is yaw_dot * R^T e_z.
  out.angular_rate_body =
      spec.yaw.first_derivative(t) * (out.pose.rotation.inverse() * Vec3::UnitZ());
  return out;
}

FrameRecord observe_frame(const WorldSpec& world, const CameraIntrinsics& K,
                          const Pose& camera, double sigma_px, std::mt19937_64& rng,
                          double min_incidence_rad) {
  FrameRecord record;
  record.gt_pose = camera;
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (const RectObject& obj : world.objects) {
    const Vec3 normal = obj.pose.rotation * Vec3::UnitZ();
    const Vec3 to_center = obj.center_world() - camera.translation;
    if (normal.dot(-to_center) <= 0) continue;  // camera behind the face
    const double sin_incidence =
        std::min(1.0, std::abs(normal.dot(to_center.normalized())));
    if (std::asin(sin_incidence) < min_incidence_rad) continue;

    const auto corners = obj.corners_world();
    std::array<Pixel, 4> pixels;
    bool visible = true;
    for (int j = 0; j < 4 && visible; ++j) {
      const auto proj = try_project(K, camera, corners[j]);
      if (!proj || proj->pixel.u < 0 || proj->pixel.u > K.image_width ||
          proj->pixel.v < 0 || proj->pixel.v > K.image_height) {
        visible = false;
      } else {
        pixels[j] = proj->pixel;
      }
    }
    if (!visible) continue;

    if (sigma_px > 0) {
      for (int j = 0; j < 4 && visible; ++j) {
        pixels[j].u += sigma_px * gauss(rng);
        pixels[j].v += sigma_px * gauss(rng);
        if (pixels[j].u < 0 || pixels[j].u > K.image_width || pixels[j].v < 0 ||
            pixels[j].v > K.image_height) {
          visible = false;
        }
      }
      if (!visible) continue;
    }

    for (int j = 0; j < 4; ++j)
      record.observations.push_back({obj.id, j + 1, pixels[j]});
  }
  return record;
}

std::vector<ImuSample> synthesize_imu(const TrajectorySpec& trajectory, const Vec3& gravity,
                                      const ImuSpec& imu, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const long n = std::lround(std::floor(trajectory.duration_s * imu.rate_hz + 1e-9));
  std::vector<ImuSample> samples;
  samples.reserve(n + 1);
  for (long k = 0; k <= n; ++k) {
    const double t = static_cast<double>(k) / imu.rate_hz;
    const TrajectorySample s = sample_trajectory(trajectory, t);
    ImuSample m;
    m.t = t;
    m.accel = s.pose.rotation.inverse() * (s.acceleration - gravity) + imu.bias_accel;
    m.gyro = s.angular_rate_body + imu.bias_gyro;
    if (imu.sigma_accel > 0)
      for (int i = 0; i < 3; ++i) m.accel[i] += imu.sigma_accel * gauss(rng);
    if (imu.sigma_gyro > 0)
      for (int i = 0; i < 3; ++i) m.gyro[i] += imu.sigma_gyro * gauss(rng);
    samples.push_back(m);
  }
  return samples;
}

MeasurementLog simulate(const Scenario& scenario) {
  MeasurementLog log;
  log.world_gt = scenario.world;
  std::sort(log.world_gt.objects.begin(), log.world_gt.objects.end(),
            [](const RectObject& a, const RectObject& b) { return a.id < b.id; });

  std::mt19937_64 rng_imu(mix_seed(scenario.seed));
  std::mt19937_64 rng_cam(mix_seed(scenario.seed ^ 0xC0FFEEULL));

  log.imu = synthesize_imu(scenario.trajectory, scenario.world.gravity,
                           scenario.sensors.imu, rng_imu);

  const double rate = scenario.sensors.camera.rate_hz;
  const long n = std::lround(std::floor(scenario.trajectory.duration_s * rate + 1e-9));
  for (long f = 0; f <= n; ++f) {
    const double t = static_cast<double>(f) / rate;
    const TrajectorySample s = sample_trajectory(scenario.trajectory, t);
    FrameRecord record =
        observe_frame(log.world_gt, scenario.sensors.camera.intrinsics, s.pose,
                      scenario.sensors.sigma_px, rng_cam,
                      scenario.sensors.min_incidence_rad);
    record.t = t;
    log.frames.push_back(std::move(record));
  }
  return log;
}

// ---------------------------------------------------------------------------
// Scenario JSON

namespace {

Vec3 vec3_from(const json& a) {
  if (!a.is_array() || a.size() != 3) throw ScenarioError("expected a 3-element array");
  return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
}

json vec3_to(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Rotation quat_from(const json& a) {
  if (!a.is_array() || a.size() != 4)
    throw ScenarioError("expected a wxyz quaternion array");
  return Rotation(Eigen::Quaterniond(a[0].get<double>(), a[1].get<double>(),
                                     a[2].get<double>(), a[3].get<double>()));
}

json quat_to(const Rotation& r) {
  const auto& q = r.quaternion();
  return json::array({q.w(), q.x(), q.y(), q.z()});
}

AxisProfile axis_from(const json& j) {
  AxisProfile p;
  p.offset = j.value("offset", 0.0);
  if (j.contains("terms")) {
    for (const auto& term : j.at("terms")) {
      if (!term.is_array() || term.size() != 3)
        throw ScenarioError("trajectory terms must be [amplitude, frequency_hz, phase] triples");
      p.terms.push_back({term[0].get<double>(), term[1].get<double>(), term[2].get<double>()});
    }
  }
  return p;
}

json axis_to(const AxisProfile& p) {
  json terms = json::array();
  for (const Sinusoid& s : p.terms)
    terms.push_back(json::array({s.amplitude, s.frequency_hz, s.phase}));
  return json{{"offset", p.offset}, {"terms", terms}};
}

void validate(const Scenario& s) {
  if (s.trajectory.duration_s <= 0) throw ScenarioError("duration_s must be positive");
  if (!s.sensors.camera.intrinsics.valid())
    throw ScenarioError("camera intrinsics are invalid");
  if (s.sensors.camera.rate_hz <= 0 || s.sensors.imu.rate_hz <= 0)
    throw ScenarioError("sensor rates must be positive");
  if (s.sensors.imu.rate_hz < s.sensors.camera.rate_hz)
    throw ScenarioError("imu rate must be at least the camera rate");
  const double ratio = s.sensors.imu.rate_hz / s.sensors.camera.rate_hz;
  if (std::abs(ratio - std::round(ratio)) > 1e-6)
    throw ScenarioError("imu rate must be an integer multiple of the camera rate");
  if (s.sensors.sigma_px < 0 || s.sensors.imu.sigma_accel < 0 || s.sensors.imu.sigma_gyro < 0)
    throw ScenarioError("noise sigmas must be non-negative");
  std::vector<std::int64_t> ids;
  for (const RectObject& o : s.world.objects) {
    if (o.width <= 0 || o.height <= 0) throw ScenarioError("object dimensions must be positive");
    ids.push_back(o.id);
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw ScenarioError("object ids must be unique");
}

}  // namespace

Scenario parse_scenario(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ScenarioError(std::string("scenario JSON parse error: ") + e.what());
  }
  try {
    Scenario s;
    const json& world = j.at("world");
    if (world.contains("gravity")) s.world.gravity = vec3_from(world.at("gravity"));
    for (const auto& obj : world.at("objects")) {
      RectObject o;
      o.id = obj.at("id").get<std::int64_t>();
      o.pose.translation = vec3_from(obj.at("position"));
      o.pose.rotation = quat_from(obj.at("orientation_wxyz"));
      o.width = obj.at("w").get<double>();
      o.height = obj.at("h").get<double>();
      s.world.objects.push_back(o);
    }

    const json& traj = j.at("trajectory");
    s.trajectory.duration_s = traj.at("duration_s").get<double>();
    s.trajectory.camera_tilt_rad = traj.value("camera_tilt_rad", 0.0);
    s.trajectory.x = axis_from(traj.at("x"));
    s.trajectory.y = axis_from(traj.at("y"));
    s.trajectory.z = axis_from(traj.at("z"));
    s.trajectory.yaw = axis_from(traj.at("yaw"));

    const json& sensors = j.at("sensors");
    const json& cam = sensors.at("camera");
    s.sensors.camera.intrinsics.fx = cam.at("fx").get<double>();
    s.sensors.camera.intrinsics.fy = cam.at("fy").get<double>();
    s.sensors.camera.intrinsics.cx = cam.at("cx").get<double>();
    s.sensors.camera.intrinsics.cy = cam.at("cy").get<double>();
    s.sensors.camera.intrinsics.image_width = cam.at("width").get<int>();
    s.sensors.camera.intrinsics.image_height = cam.at("height").get<int>();
    s.sensors.camera.rate_hz = cam.at("rate_hz").get<double>();

    const json& imu = sensors.at("imu");
    s.sensors.imu.rate_hz = imu.at("rate_hz").get<double>();
    s.sensors.imu.sigma_accel = imu.value("sigma_a", 0.0);
    s.sensors.imu.sigma_gyro = imu.value("sigma_g", 0.0);
    if (imu.contains("bias_a")) s.sensors.imu.bias_accel = vec3_from(imu.at("bias_a"));
    if (imu.contains("bias_g")) s.sensors.imu.bias_gyro = vec3_from(imu.at("bias_g"));

    s.sensors.sigma_px = sensors.value("sigma_px", 0.0);
    s.sensors.min_incidence_rad =
        sensors.value("min_incidence_deg", 10.0) * M_PI / 180.0;

    s.seed = j.value("seed", 0ULL);
    validate(s);
    return s;
  } catch (const json::exception& e) {
    throw ScenarioError(std::string("scenario JSON is missing fields: ") + e.what());
  }
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

std::string scenario_to_json(const Scenario& s) {
  json objects = json::array();
  for (const RectObject& o : s.world.objects) {
    objects.push_back(json{{"id", o.id},
                           {"position", vec3_to(o.pose.translation)},
                           {"orientation_wxyz", quat_to(o.pose.rotation)},
                           {"w", o.width},
                           {"h", o.height}});
  }
  json j{
      {"world", {{"gravity", vec3_to(s.world.gravity)}, {"objects", objects}}},
      {"trajectory",
       {{"duration_s", s.trajectory.duration_s},
        {"camera_tilt_rad", s.trajectory.camera_tilt_rad},
        {"x", axis_to(s.trajectory.x)},
        {"y", axis_to(s.trajectory.y)},
        {"z", axis_to(s.trajectory.z)},
        {"yaw", axis_to(s.trajectory.yaw)}}},
      {"sensors",
       {{"camera",
         {{"fx", s.sensors.camera.intrinsics.fx},
          {"fy", s.sensors.camera.intrinsics.fy},
          {"cx", s.sensors.camera.intrinsics.cx},
          {"cy", s.sensors.camera.intrinsics.cy},
          {"width", s.sensors.camera.intrinsics.image_width},
          {"height", s.sensors.camera.intrinsics.image_height},
          {"rate_hz", s.sensors.camera.rate_hz}}},
        {"imu",
         {{"rate_hz", s.sensors.imu.rate_hz},
          {"sigma_a", s.sensors.imu.sigma_accel},
          {"sigma_g", s.sensors.imu.sigma_gyro},
          {"bias_a", vec3_to(s.sensors.imu.bias_accel)},
          {"bias_g", vec3_to(s.sensors.imu.bias_gyro)}}},
        {"sigma_px", s.sensors.sigma_px},
        {"min_incidence_deg", s.sensors.min_incidence_rad * 180.0 / M_PI}}},
      {"seed", s.seed}};
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Measurement log JSONL

void save_log(const MeasurementLog& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ScenarioError("cannot write log file: " + path.string());

  json objects = json::array();
  for (const RectObject& o : log.world_gt.objects) {
    objects.push_back(json{{"id", o.id},
                           {"position", vec3_to(o.pose.translation)},
                           {"orientation_wxyz", quat_to(o.pose.rotation)},
                           {"w", o.width},
                           {"h", o.height}});
  }
  out << json{{"type", "world"},
              {"gravity", vec3_to(log.world_gt.gravity)},
              {"objects", objects}}
             .dump()
      << "\n";

  std::size_t fi = 0;
  std::size_t ii = 0;
  while (fi < log.frames.size() || ii < log.imu.size()) {
    const bool take_imu =
        ii < log.imu.size() &&
        (fi >= log.frames.size() || log.imu[ii].t <= log.frames[fi].t);
    if (take_imu) {
      const ImuSample& m = log.imu[ii++];
      out << json{{"type", "imu"},
                  {"t", m.t},
                  {"accel", vec3_to(m.accel)},
                  {"gyro", vec3_to(m.gyro)}}
                 .dump()
          << "\n";
    } else {
      const FrameRecord& f = log.frames[fi++];
      json obs = json::array();
      for (const CornerObservation& o : f.observations)
        obs.push_back(json::array({o.object_id, o.corner_j, o.pixel.u, o.pixel.v}));
      out << json{{"type", "frame"},
                  {"t", f.t},
                  {"gt_position", vec3_to(f.gt_pose.translation)},
                  {"gt_orientation_wxyz", quat_to(f.gt_pose.rotation)},
                  {"obs", obs}}
                 .dump()
          << "\n";
    }
  }
  out.flush();
  if (!out) throw ScenarioError("failed while writing log file: " + path.string());
}

MeasurementLog load_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open log file: " + path.string());
  MeasurementLog log;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ScenarioError(std::string("log parse error: ") + e.what());
    }
    const std::string type = j.at("type").get<std::string>();
    if (type == "world") {
      log.world_gt.gravity = vec3_from(j.at("gravity"));
      for (const auto& obj : j.at("objects")) {
        RectObject o;
        o.id = obj.at("id").get<std::int64_t>();
        o.pose.translation = vec3_from(obj.at("position"));
        o.pose.rotation = quat_from(obj.at("orientation_wxyz"));
        o.width = obj.at("w").get<double>();
        o.height = obj.at("h").get<double>();
        log.world_gt.objects.push_back(o);
      }
    } else if (type == "imu") {
      ImuSample m;
      m.t = j.at("t").get<double>();
      m.accel = vec3_from(j.at("accel"));
      m.gyro = vec3_from(j.at("gyro"));
      log.imu.push_back(m);
    } else if (type == "frame") {
      FrameRecord f;
      f.t = j.at("t").get<double>();
      f.gt_pose.translation = vec3_from(j.at("gt_position"));
      f.gt_pose.rotation = quat_from(j.at("gt_orientation_wxyz"));
      for (const auto& o : j.at("obs")) {
        CornerObservation c;
        c.object_id = o[0].get<std::int64_t>();
        c.corner_j = o[1].get<int>();
        c.pixel = {o[2].get<double>(), o[3].get<double>()};
        f.observations.push_back(c);
      }
      log.frames.push_back(std::move(f));
    } else {
      throw ScenarioError("unknown log record type: " + type);
    }
  }
  return log;
}

}  // namespace fsp
