#include "fsp/geometry.hpp"

#include <cmath>

namespace fsp {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(),
       v.z(), 0, -v.x(),
       -v.y(), v.x(), 0;
  return m;
}

Rotation Rotation::retracted(const Vec3& delta) const {
  return *this * so3_exp(delta);
}

Rotation so3_exp(const Vec3& omega) {
  const double theta2 = omega.squaredNorm();
  const double theta = std::sqrt(theta2);
  double half_sinc;  // sin(theta/2) / theta
  double cos_half;
  if (theta < 1e-8) {
    half_sinc = 0.5 - theta2 / 48.0;
    cos_half = 1.0 - theta2 / 8.0;
  } else {
    half_sinc = std::sin(0.5 * theta) / theta;
    cos_half = std::cos(0.5 * theta);
  }
  Eigen::Quaterniond q(cos_half, half_sinc * omega.x(), half_sinc * omega.y(),
                       half_sinc * omega.z());
  return Rotation(q);
}

Vec3 so3_log(const Rotation& r) {
  Eigen::Quaterniond q = r.quaternion();
  if (q.w() < 0) q.coeffs() = -q.coeffs();
  const double n = q.vec().norm();
  const double w = q.w();
  if (n < 1e-12) {
    // theta/n = 2/w * (1 - n^2/(3 w^2)) + O(n^4)
    return (2.0 / w) * (1.0 - n * n / (3.0 * w * w)) * q.vec();
  }
  const double theta = 2.0 * std::atan2(n, w);
  Vec3 axis = q.vec() / n;
  if (w < 1e-15) {
    // theta == pi: q and -q encode the same rotation; pick the axis whose
    // first nonzero component is positive.
    for (int i = 0; i < 3; ++i) {
      if (std::abs(axis[i]) > 1e-12) {
        if (axis[i] < 0) axis = -axis;
        break;
      }
    }
  }
  return theta * axis;
}

Mat3 so3_right_jacobian(const Vec3& phi) {
  const double theta2 = phi.squaredNorm();
  const Mat3 hat = skew(phi);
  if (theta2 < 1e-16) {
    return Mat3::Identity() - 0.5 * hat + (1.0 / 6.0) * hat * hat;
  }
  const double theta = std::sqrt(theta2);
  const double a = (1.0 - std::cos(theta)) / theta2;
  const double b = (theta - std::sin(theta)) / (theta2 * theta);
  return Mat3::Identity() - a * hat + b * hat * hat;
}

Mat3 so3_right_jacobian_inverse(const Vec3& phi) {
  const double theta2 = phi.squaredNorm();
  const Mat3 hat = skew(phi);
  if (theta2 < 1e-16) {
    return Mat3::Identity() + 0.5 * hat + (1.0 / 12.0) * hat * hat;
  }
  const double theta = std::sqrt(theta2);
  const double c = 1.0 / theta2 -
                   (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() + 0.5 * hat + c * hat * hat;
}

Mat3 CameraIntrinsics::matrix() const {
  Mat3 k;
  k << fx, 0, cx,
       0, fy, cy,
       0, 0, 1;
  return k;
}

Mat3 CameraIntrinsics::inverse_matrix() const {
  Mat3 k;
  k << 1.0 / fx, 0, -cx / fx,
       0, 1.0 / fy, -cy / fy,
       0, 0, 1;
  return k;
}

std::optional<Projection> try_project(const CameraIntrinsics& K, const Pose& camera,
                                      const Vec3& p_world) {
  const Vec3 q = camera.rotation.inverse() * (p_world - camera.translation);
  if (q.z() <= kDepthEpsilon) return std::nullopt;
  Projection out;
  out.pixel.u = K.fx * q.x() / q.z() + K.cx;
  out.pixel.v = K.fy * q.y() / q.z() + K.cy;
  out.depth = q.z();
  return out;
}

Pixel project(const CameraIntrinsics& K, const Pose& camera, const Vec3& p_world) {
  const auto p = try_project(K, camera, p_world);
  if (!p) throw PointBehindCamera();
  return p->pixel;
}

}  // namespace fsp
