#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <optional>
#include <stdexcept>

namespace fsp {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec8 = Eigen::Matrix<double, 8, 1>;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat8 = Eigen::Matrix<double, 8, 8>;
using Mat9 = Eigen::Matrix<double, 9, 9>;

/// Minimum admissible depth (meters) in front of a camera. Predictions at or
/// below this depth are hard errors, never clamped values.
inline constexpr double kDepthEpsilon = 1e-6;

struct PointBehindCamera : std::runtime_error {
  PointBehindCamera() : std::runtime_error("point projects behind the camera") {}
};

Mat3 skew(const Vec3& v);

/// SO(3) element stored as a unit quaternion. Every composition renormalizes,
/// so R * R^T stays within 1e-9 of identity under long operation chains.
class Rotation {
 public:
  Rotation() : q_(Eigen::Quaterniond::Identity()) {}
  explicit Rotation(const Eigen::Quaterniond& q) : q_(q) { renormalize(); }
  explicit Rotation(const Mat3& m) : q_(m) { renormalize(); }

  static Rotation identity() { return Rotation(); }

  Mat3 matrix() const { return q_.toRotationMatrix(); }
  const Eigen::Quaterniond& quaternion() const { return q_; }

  Rotation inverse() const { return Rotation(q_.conjugate()); }

  Rotation operator*(const Rotation& rhs) const { return Rotation(q_ * rhs.q_); }
  Vec3 operator*(const Vec3& p) const { return q_ * p; }

  /// Right-perturbation update R <- R * exp(delta), the boxplus used by the
  /// optimizer for every orientation-valued state.
  Rotation retracted(const Vec3& delta) const;

 private:
  // Normalizes only when the norm has drifted, so storing and reloading an
  // already-unit quaternion preserves its bits exactly.
  void renormalize() {
    if (std::abs(q_.squaredNorm() - 1.0) > 1e-12) q_.normalize();
  }

  Eigen::Quaterniond q_;
};

/// Rodrigues exponential map. Falls back to a Taylor branch below 1e-8 rad.
Rotation so3_exp(const Vec3& omega);

/// Inverse of so3_exp for angles in [0, pi]. At exactly pi the returned axis
/// has its first nonzero component positive, which keeps tests deterministic.
Vec3 so3_log(const Rotation& r);

Mat3 so3_right_jacobian(const Vec3& phi);
Mat3 so3_right_jacobian_inverse(const Vec3& phi);

/// Rigid transform taking vectors from the local frame to the world frame.
struct Pose {
  Vec3 translation = Vec3::Zero();
  Rotation rotation;

  static Pose identity() { return {}; }

  Pose inverse() const {
    const Rotation rinv = rotation.inverse();
    return {rinv * (-translation), rinv};
  }

  Pose operator*(const Pose& rhs) const {
    return {translation + rotation * rhs.translation, rotation * rhs.rotation};
  }

  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }

  /// Boxplus with tangent ordering [dt (3), dphi (3)]; translation is additive
  /// in world coordinates, rotation uses the right perturbation.
  Pose retracted(const Vec6& delta) const {
    return {translation + delta.head<3>(), rotation.retracted(delta.tail<3>())};
  }
};

inline Pose compose(const Pose& a, const Pose& b) { return a * b; }

struct CameraIntrinsics {
  double fx = 0;
  double fy = 0;
  double cx = 0;
  double cy = 0;
  int image_width = 0;
  int image_height = 0;

  bool valid() const {
    return fx > 0 && fy > 0 && image_width > 0 && image_height > 0 &&
           cx > 0 && cx < image_width && cy > 0 && cy < image_height;
  }

  Mat3 matrix() const;
  Mat3 inverse_matrix() const;
};

struct Pixel {
  double u = 0;
  double v = 0;
};

struct Projection {
  Pixel pixel;
  double depth = 0;  // z in the camera frame, available for visibility tests
};

/// Pinhole projection of a world point. Returns nullopt when the point is not
/// strictly in front of the camera (depth <= kDepthEpsilon).
std::optional<Projection> try_project(const CameraIntrinsics& K, const Pose& camera,
                                      const Vec3& p_world);

/// Throwing variant of try_project.
Pixel project(const CameraIntrinsics& K, const Pose& camera, const Vec3& p_world);

}  // namespace fsp
