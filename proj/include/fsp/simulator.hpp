#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <vector>

#include "fsp/geometry.hpp"
#include "fsp/imu.hpp"
#include "fsp/parameterization.hpp"

namespace fsp {

struct ScenarioError : std::runtime_error {
  explicit ScenarioError(const std::string& what) : std::runtime_error(what) {}
};

struct RectObject {
  std::int64_t id = 0;
  Pose pose;  // object frame -> world; +z is the face normal
  double width = 1;
  double height = 1;

  std::array<Vec3, 4> corners_world() const;
  Vec3 center_world() const;
};

struct WorldSpec {
  std::vector<RectObject> objects;  // kept sorted by id
  Vec3 gravity = Vec3(0, 0, -9.81);
};

struct Sinusoid {
  double amplitude = 0;     // meters (or radians for yaw)
  double frequency_hz = 0;
  double phase = 0;         // radians
};

/// Sum-of-sinusoids profile with closed-form derivatives.
struct AxisProfile {
  double offset = 0;
  std::vector<Sinusoid> terms;

  double value(double t) const;
  double first_derivative(double t) const;
  double second_derivative(double t) const;
};

struct TrajectorySpec {
  AxisProfile x, y, z;
  AxisProfile yaw;            // radians; roll/pitch stay level
  double camera_tilt_rad = 0; // fixed pitch of the optical axis, + is up
  double duration_s = 0;
};

struct CameraSpec {
  CameraIntrinsics intrinsics;
  double rate_hz = 10;
};

struct ImuSpec {
  double rate_hz = 100;
  double sigma_accel = 0;     // per-sample std dev, m/s^2
  double sigma_gyro = 0;      // per-sample std dev, rad/s
  Vec3 bias_accel = Vec3::Zero();
  Vec3 bias_gyro = Vec3::Zero();
};

struct SensorSpec {
  CameraSpec camera;
  ImuSpec imu;
  double sigma_px = 0;
  double min_incidence_rad = 10.0 * M_PI / 180.0;
};

struct Scenario {
  WorldSpec world;
  TrajectorySpec trajectory;
  SensorSpec sensors;
  std::uint64_t seed = 0;
};

struct TrajectorySample {
  Pose pose;                 // camera/body frame -> world
  Vec3 velocity = Vec3::Zero();
  Vec3 acceleration = Vec3::Zero();
  Vec3 angular_rate_body = Vec3::Zero();
};

struct CornerObservation {
  std::int64_t object_id = 0;
  int corner_j = 1;  // 1..4, StructuralPointIndex ordering
  Pixel pixel;
};

struct FrameRecord {
  double t = 0;
  std::vector<CornerObservation> observations;
  Pose gt_pose;
};

struct MeasurementLog {
  std::vector<FrameRecord> frames;
  std::vector<ImuSample> imu;
  WorldSpec world_gt;
};

/// Closed-form pose/velocity/acceleration at time t. The camera frame is x
/// right, y down, z along the optical axis; yaw 0 looks along world +x with
/// world +z up. Throws std::out_of_range outside [0, duration].
TrajectorySample sample_trajectory(const TrajectorySpec& spec, double t);

/// Projects every object and keeps those with all four corners in front of
/// the camera, inside the image, on the camera-facing side of the plane and
/// above the grazing-incidence threshold. Corner pixels are perturbed with
/// independent Gaussian noise; an object is dropped if noise pushes any of
/// its corners out of the image.
FrameRecord observe_frame(const WorldSpec& world, const CameraIntrinsics& K,
                          const Pose& camera, double sigma_px, std::mt19937_64& rng,
                          double min_incidence_rad);

/// Specific-force / angular-rate stream at the IMU rate:
/// accel = R^T (a_world - g) + bias + noise, gyro = w_body + bias + noise.
std::vector<ImuSample> synthesize_imu(const TrajectorySpec& trajectory, const Vec3& gravity,
                                      const ImuSpec& imu, std::mt19937_64& rng);

/// Full deterministic run: same scenario and seed give a bitwise-identical log.
MeasurementLog simulate(const Scenario& scenario);

Scenario load_scenario(const std::filesystem::path& path);
std::string scenario_to_json(const Scenario& scenario);
Scenario parse_scenario(const std::string& json_text);

/// JSON-lines serialization: a "world" header record, then "frame" and "imu"
/// records interleaved by timestamp.
void save_log(const MeasurementLog& log, const std::filesystem::path& path);
MeasurementLog load_log(const std::filesystem::path& path);

}  // namespace fsp
