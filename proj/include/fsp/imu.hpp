#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "fsp/geometry.hpp"

namespace fsp {

struct EmptyImuBuffer : std::runtime_error {
  EmptyImuBuffer() : std::runtime_error("preintegrate: empty sample buffer") {}
};

struct NonMonotonicTimestamps : std::runtime_error {
  NonMonotonicTimestamps()
      : std::runtime_error("preintegrate: timestamps must be strictly increasing") {}
};

struct DegenerateInterval : std::runtime_error {
  explicit DegenerateInterval(const char* what) : std::runtime_error(what) {}
};

struct ImuSample {
  double t = 0;             // seconds
  Vec3 accel = Vec3::Zero();  // specific force, body frame, m/s^2
  Vec3 gyro = Vec3::Zero();   // angular rate, body frame, rad/s
};

struct ImuBias {
  Vec3 accel = Vec3::Zero();  // m/s^2
  Vec3 gyro = Vec3::Zero();   // rad/s

  Vec6 vector() const {
    Vec6 v;
    v << accel, gyro;
    return v;
  }
};

/// Per-sample noise standard deviations at the configured rate. Zero means
/// noiseless; the resulting information matrix is then the identity (any
/// positive weighting is equivalent when residuals can vanish).
struct ImuNoise {
  double sigma_accel = 0;
  double sigma_gyro = 0;
};

/// Gravity-free compound of the samples between two keyframes, linearized at
/// bias_ref. Residual/covariance block order is (dP, dV, dR).
struct Preintegrated {
  double dt = 0;
  Vec3 delta_p = Vec3::Zero();
  Vec3 delta_v = Vec3::Zero();
  Rotation delta_r;
  ImuBias bias_ref;
  Mat9 cov = Mat9::Zero();
  Mat9 info = Mat9::Identity();

  // First-order sensitivities of the deltas to the bias linearization point.
  Mat3 dp_dba = Mat3::Zero();
  Mat3 dp_dbg = Mat3::Zero();
  Mat3 dv_dba = Mat3::Zero();
  Mat3 dv_dbg = Mat3::Zero();
  Mat3 dr_dbg = Mat3::Zero();

  Vec3 corrected_delta_p(const ImuBias& b) const {
    return delta_p + dp_dba * (b.accel - bias_ref.accel) + dp_dbg * (b.gyro - bias_ref.gyro);
  }
  Vec3 corrected_delta_v(const ImuBias& b) const {
    return delta_v + dv_dba * (b.accel - bias_ref.accel) + dv_dbg * (b.gyro - bias_ref.gyro);
  }
  Rotation corrected_delta_r(const ImuBias& b) const {
    return delta_r * so3_exp(dr_dbg * (b.gyro - bias_ref.gyro));
  }
};

/// Midpoint integration of the buffer: consecutive sample pairs advance the
/// rotation with the averaged gyro and the velocity/position with the average
/// of the two rotated specific forces. The first and last sample must sit on
/// the interval boundaries.
Preintegrated preintegrate(std::span<const ImuSample> samples, const ImuBias& bias,
                           const ImuNoise& noise = {});

/// Three-pose inertial residual with the velocities eliminated algebraically:
/// v at pose_a is solved from the first interval's position equation, chained
/// through the second interval, leaving [position (3), rotation interval 1 (3),
/// rotation interval 2 (3)]. Exactly zero when the poses and preintegrations
/// come from the same noiseless trajectory at bias == bias_ref.
Vec9 imu_ternary_residual(const Pose& pose_a, const Pose& pose_b, const Pose& pose_c,
                          const Preintegrated& pre1, const Preintegrated& pre2,
                          const ImuBias& bias, const Vec3& gravity);

/// Velocity of the body at pose_a implied by the bracketing poses and the
/// preintegrated interval between them.
Vec3 velocity_from_poses(const Pose& pose_a, const Pose& pose_b, const Preintegrated& pre,
                         const ImuBias& bias, const Vec3& gravity);

/// 9x9 information of the ternary residual assembled from the two interval
/// covariances (position/velocity of interval 1 enter through the velocity
/// elimination; position-rotation cross terms are neglected).
Mat9 ternary_information(const Preintegrated& pre1, const Preintegrated& pre2);

}  // namespace fsp
