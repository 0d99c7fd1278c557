#include "fsp/imu.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace fsp {

Preintegrated preintegrate(std::span<const ImuSample> samples, const ImuBias& bias,
                           const ImuNoise& noise) {
  if (samples.empty()) throw EmptyImuBuffer();
  for (std::size_t k = 1; k < samples.size(); ++k) {
    if (!(samples[k].t > samples[k - 1].t)) throw NonMonotonicTimestamps();
  }
  if (samples.size() < 2)
    throw DegenerateInterval("preintegrate: a single sample cannot span an interval");

  Preintegrated out;
  out.bias_ref = bias;
  out.dt = samples.back().t - samples.front().t;

  const double var_a = noise.sigma_accel * noise.sigma_accel;
  const double var_g = noise.sigma_gyro * noise.sigma_gyro;
  const bool noiseless = noise.sigma_accel <= 0 && noise.sigma_gyro <= 0;

  for (std::size_t k = 0; k + 1 < samples.size(); ++k) {
    const ImuSample& s0 = samples[k];
    const ImuSample& s1 = samples[k + 1];
    const double dt = s1.t - s0.t;
    const double dt2 = dt * dt;

    const Vec3 w_mid = 0.5 * (s0.gyro + s1.gyro) - bias.gyro;
    const Vec3 theta = w_mid * dt;
    const Rotation step = so3_exp(theta);
    const Rotation r_next = out.delta_r * step;

    const Vec3 f0 = s0.accel - bias.accel;
    const Vec3 f1 = s1.accel - bias.accel;
    const Mat3 r_k = out.delta_r.matrix();
    const Mat3 r_k1 = r_next.matrix();
    const Vec3 a_hat = 0.5 * (r_k * f0 + r_k1 * f1);

    // Bias sensitivities; exact first derivatives of this midpoint scheme.
    const Mat3 jr = so3_right_jacobian(theta);
    const Mat3 dr_dbg_next = step.matrix().transpose() * out.dr_dbg - jr * dt;
    const Mat3 da_dba = -0.5 * (r_k + r_k1);
    const Mat3 da_dbg =
        -0.5 * (r_k * skew(f0) * out.dr_dbg + r_k1 * skew(f1) * dr_dbg_next);

    out.dp_dba += out.dv_dba * dt + 0.5 * da_dba * dt2;
    out.dp_dbg += out.dv_dbg * dt + 0.5 * da_dbg * dt2;
    out.dv_dba += da_dba * dt;
    out.dv_dbg += da_dbg * dt;
    out.dr_dbg = dr_dbg_next;

    if (!noiseless) {
      // First-order propagation of (dP, dV, dR) uncertainty.
      Mat9 a = Mat9::Identity();
      a.block<3, 3>(0, 3) = Mat3::Identity() * dt;
      a.block<3, 3>(0, 6) = -0.5 * r_k * skew(f0) * dt2;
      a.block<3, 3>(3, 6) = -r_k * skew(f0) * dt;
      a.block<3, 3>(6, 6) = step.matrix().transpose();

      Eigen::Matrix<double, 9, 6> b = Eigen::Matrix<double, 9, 6>::Zero();
      b.block<3, 3>(0, 0) = 0.5 * r_k * dt2;
      b.block<3, 3>(3, 0) = r_k * dt;
      b.block<3, 3>(6, 3) = jr * dt;

      Vec6 q;
      q << var_a, var_a, var_a, var_g, var_g, var_g;
      out.cov = a * out.cov * a.transpose() + b * q.asDiagonal() * b.transpose();
    }

    out.delta_p += out.delta_v * dt + 0.5 * a_hat * dt2;
    out.delta_v += a_hat * dt;
    out.delta_r = r_next;
  }

  if (noiseless) {
    out.info = Mat9::Identity();
  } else {
    Mat9 floored = out.cov + 1e-16 * Mat9::Identity();
    out.info = floored.inverse();
    out.info = 0.5 * (out.info + out.info.transpose()).eval();
  }
  return out;
}

Vec3 velocity_from_poses(const Pose& pose_a, const Pose& pose_b, const Preintegrated& pre,
                         const ImuBias& bias, const Vec3& gravity) {
  if (pre.dt <= 0) throw DegenerateInterval("velocity_from_poses: interval must be positive");
  const Vec3 dp = pre.corrected_delta_p(bias);
  return (pose_b.translation - pose_a.translation - 0.5 * gravity * pre.dt * pre.dt -
          pose_a.rotation * dp) /
         pre.dt;
}

Vec9 imu_ternary_residual(const Pose& pose_a, const Pose& pose_b, const Pose& pose_c,
                          const Preintegrated& pre1, const Preintegrated& pre2,
                          const ImuBias& bias, const Vec3& gravity) {
  if (pre1.dt <= 0 || pre2.dt <= 0)
    throw DegenerateInterval("imu_ternary_residual: intervals must be positive");

  const double dt1 = pre1.dt;
  const double dt2 = pre2.dt;

  const Vec3 v_a = velocity_from_poses(pose_a, pose_b, pre1, bias, gravity);
  const Vec3 v_b = v_a + gravity * dt1 + pose_a.rotation * pre1.corrected_delta_v(bias);

  const Vec3 predicted_c = pose_b.translation + v_b * dt2 + 0.5 * gravity * dt2 * dt2 +
                           pose_b.rotation * pre2.corrected_delta_p(bias);

  Vec9 r;
  r.head<3>() = pose_c.translation - predicted_c;
  r.segment<3>(3) = so3_log(pre1.corrected_delta_r(bias).inverse() *
                            pose_a.rotation.inverse() * pose_b.rotation);
  r.tail<3>() = so3_log(pre2.corrected_delta_r(bias).inverse() *
                        pose_b.rotation.inverse() * pose_c.rotation);
  return r;
}

Mat9 ternary_information(const Preintegrated& pre1, const Preintegrated& pre2) {
  const bool noiseless = pre1.cov.isZero(0.0) && pre2.cov.isZero(0.0);
  if (noiseless) return Mat9::Identity();

  const double k = pre2.dt / pre1.dt;
  const Mat3 cov_p1 = pre1.cov.block<3, 3>(0, 0);
  const Mat3 cov_v1 = pre1.cov.block<3, 3>(3, 3);
  const Mat3 cov_pv1 = pre1.cov.block<3, 3>(0, 3);

  Mat3 cov_pos = pre2.cov.block<3, 3>(0, 0) + k * k * cov_p1 +
                 pre2.dt * pre2.dt * cov_v1 +
                 k * pre2.dt * (cov_pv1 + cov_pv1.transpose());

  Mat9 cov = Mat9::Zero();
  cov.block<3, 3>(0, 0) = cov_pos;
  cov.block<3, 3>(3, 3) = pre1.cov.block<3, 3>(6, 6);
  cov.block<3, 3>(6, 6) = pre2.cov.block<3, 3>(6, 6);
  cov += 1e-16 * Mat9::Identity();

  Mat9 info = cov.inverse();
  return 0.5 * (info + info.transpose());
}

}  // namespace fsp
