#include "fsp/parameterization.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>

namespace fsp {

std::array<Vec3, 4> rect_structural_points(const RectDims& dims) {
  return {Vec3(0, 0, 0), Vec3(dims.w, 0, 0), Vec3(dims.w, dims.h, 0),
          Vec3(0, dims.h, 0)};
}

RectDims fsp_dims(const FspRect& l) {
  if (l.omega <= 0) throw DegenerateParam("fsp_dims: omega must be positive");
  if (l.form_factor <= 0) throw DegenerateParam("fsp_dims: form factor must be positive");
  return {l.w_bar / l.omega, l.w_bar / (l.form_factor * l.omega)};
}

Vec3 fsp_origin_world(const Pose& anchor, const FspRect& l) {
  if (l.omega <= 0) throw DegenerateParam("fsp_origin_world: omega must be positive");
  const Vec3 ray(l.ray.x(), l.ray.y(), 1.0);
  return anchor.translation + (1.0 / l.omega) * (anchor.rotation * ray);
}

std::array<Vec3, 4> fsp_unit_depth_points(const FspRect& l) {
  if (l.form_factor <= 0)
    throw DegenerateParam("fsp_unit_depth_points: form factor must be positive");
  return rect_structural_points({l.w_bar, l.w_bar / l.form_factor});
}

std::array<Vec3, 4> fsp_corners_world(const Pose& anchor, const FspRect& l) {
  const Vec3 origin = fsp_origin_world(anchor, l);
  const Rotation r_wo = anchor.rotation * l.rel_orientation;
  const auto pts = rect_structural_points(fsp_dims(l));
  std::array<Vec3, 4> out;
  for (int j = 0; j < 4; ++j) out[j] = origin + r_wo * pts[j];
  return out;
}

std::optional<Projection> try_fsp_project(const CameraIntrinsics& K, const Pose& camera,
                                          const Pose& anchor, const FspRect& l,
                                          StructuralPointIndex j) {
  if (l.omega <= 0) throw DegenerateParam("fsp_project: omega must be positive");
  const Vec3 ray(l.ray.x(), l.ray.y(), 1.0);
  const Vec3 s_unit = fsp_unit_depth_points(l)[j.offset()];
  const Vec3 p_world = anchor.translation +
                       (1.0 / l.omega) * (anchor.rotation * (ray + l.rel_orientation * s_unit));
  return try_project(K, camera, p_world);
}

Pixel fsp_project(const CameraIntrinsics& K, const Pose& camera, const Pose& anchor,
                  const FspRect& l, StructuralPointIndex j) {
  const auto p = try_fsp_project(K, camera, anchor, l, j);
  if (!p) throw PointBehindCamera();
  return p->pixel;
}

Vec3 fhp_point_world(const Pose& anchor, const FhpPoint& p) {
  if (p.omega <= 0) throw DegenerateParam("fhp_point_world: omega must be positive");
  const Vec3 ray(p.ray.x(), p.ray.y(), 1.0);
  return anchor.translation + (1.0 / p.omega) * (anchor.rotation * ray);
}

std::optional<Projection> try_fhp_project(const CameraIntrinsics& K, const Pose& camera,
                                          const Pose& anchor, const FhpPoint& p) {
  return try_project(K, camera, fhp_point_world(anchor, p));
}

Pixel fhp_project(const CameraIntrinsics& K, const Pose& camera, const Pose& anchor,
                  const FhpPoint& p) {
  const auto proj = try_fhp_project(K, camera, anchor, p);
  if (!proj) throw PointBehindCamera();
  return proj->pixel;
}

namespace {

// Exact 4-point DLT from the unit square (0,0),(1,0),(1,1),(0,1) to the given
// pixels. Solved as the nullspace of the stacked 8x9 system.
Mat3 homography_from_unit_square(const std::array<Pixel, 4>& px) {
  static const double sq[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  Eigen::Matrix<double, 8, 9> a = Eigen::Matrix<double, 8, 9>::Zero();
  for (int i = 0; i < 4; ++i) {
    const double x = sq[i][0];
    const double y = sq[i][1];
    const double u = px[i].u;
    const double v = px[i].v;
    a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y, -u;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y, -v;
  }
  const Eigen::JacobiSVD<Eigen::Matrix<double, 8, 9>> svd(a, Eigen::ComputeFullV);
  const Eigen::Matrix<double, 9, 1> h = svd.matrixV().col(8);
  Mat3 hm;
  hm << h(0), h(1), h(2),
        h(3), h(4), h(5),
        h(6), h(7), h(8);
  return hm;
}

Rotation nearest_rotation(const Mat3& m) {
  const Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return Rotation(r);
}

}  // namespace

FspRect init_fsp_from_single_view(const CameraIntrinsics& K,
                                  const std::array<Pixel, 4>& corners_px,
                                  double omega0) {
  if (omega0 <= 0) throw DegenerateParam("init_fsp_from_single_view: omega0 must be positive");

  Mat3 h = homography_from_unit_square(corners_px);
  const double scale = h.norm();
  if (!(scale > 0) || !h.allFinite())
    throw DegenerateView("single-view init: homography is not finite");
  if (std::abs(h.determinant()) / (scale * scale * scale) < 1e-12)
    throw DegenerateView("single-view init: corners are collinear");

  Mat3 a = K.inverse_matrix() * h;
  if (a.col(2).z() < 0) a = -a;
  if (a.col(2).z() < 1e-12 * a.norm())
    throw DegenerateView("single-view init: rectangle lies in the camera plane");

  const double n1 = a.col(0).norm();
  const double n2 = a.col(1).norm();
  if (n1 < 1e-12 * scale || n2 < 1e-12 * scale)
    throw DegenerateView("single-view init: degenerate homography columns");

  const double s = 2.0 / (n1 + n2);
  const Vec3 r1 = s * a.col(0);
  const Vec3 r2 = s * a.col(1);
  Mat3 r_raw;
  r_raw.col(0) = r1;
  r_raw.col(1) = r2;
  r_raw.col(2) = r1.cross(r2);
  const Vec3 t = s * a.col(2);

  FspRect out;
  out.ray = Vec2(t.x() / t.z(), t.y() / t.z());
  out.omega = omega0;
  out.w_bar = n1 / a.col(2).z();
  out.form_factor = n1 / n2;
  out.rel_orientation = nearest_rotation(r_raw);
  return out;
}

FhpPoint init_fhp_from_pixel(const CameraIntrinsics& K, const Pixel& px, double omega0) {
  if (omega0 <= 0) throw DegenerateParam("init_fhp_from_pixel: omega0 must be positive");
  FhpPoint p;
  p.ray = Vec2((px.u - K.cx) / K.fx, (px.v - K.cy) / K.fy);
  p.omega = omega0;
  return p;
}

}  // namespace fsp
