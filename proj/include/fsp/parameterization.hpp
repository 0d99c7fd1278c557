#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>

#include "fsp/geometry.hpp"

namespace fsp {

struct DegenerateParam : std::runtime_error {
  explicit DegenerateParam(const char* what) : std::runtime_error(what) {}
};

struct DegenerateView : std::runtime_error {
  explicit DegenerateView(const char* what) : std::runtime_error(what) {}
};

/// Metric rectangle dimensions.
struct RectDims {
  double w = 0;  // width, meters
  double h = 0;  // height, meters
};

/// Corner index of a rectangular object. Ordering is fixed: 1 bottom-left
/// (the object-frame origin), 2 bottom-right, 3 top-right, 4 top-left.
class StructuralPointIndex {
 public:
  explicit StructuralPointIndex(int j) : j_(j) {
    if (j < 1 || j > 4) throw std::out_of_range("corner index must be in [1,4]");
  }
  int value() const { return j_; }
  int offset() const { return j_ - 1; }

 private:
  int j_;
};

/// Anchored inverse-depth rectangle landmark. The eight optimizable scalars
/// are ray (2), omega (1), w_bar + form_factor (2) and rel_orientation (3);
/// the anchor is a separate pose variable referenced by id.
struct FspRect {
  std::int64_t anchor_id = -1;
  Vec2 ray = Vec2::Zero();     // (u_r, v_r); the full viewing ray is [u_r, v_r, 1]
  double omega = 1.0;          // inverse depth of the bottom-left corner, 1/m
  double w_bar = 1.0;          // width at unitary depth, dimensionless
  double form_factor = 1.0;    // f = w / h
  Rotation rel_orientation;    // object orientation relative to the anchor frame

  bool positive() const { return omega > 0 && w_bar > 0 && form_factor > 0; }
};

/// Anchored inverse-depth point landmark, the point-feature counterpart of
/// FspRect used as the evaluation baseline.
struct FhpPoint {
  std::int64_t anchor_id = -1;
  Vec2 ray = Vec2::Zero();
  double omega = 1.0;

  bool positive() const { return omega > 0; }
};

/// Object-frame corner positions, origin at the bottom-left corner, all on
/// the z = 0 plane.
std::array<Vec3, 4> rect_structural_points(const RectDims& dims);

/// Metric dimensions implied by the landmark: w = w_bar/omega, h = w_bar/(f*omega).
RectDims fsp_dims(const FspRect& l);

/// World position of the object-frame origin (bottom-left corner):
/// F + (1/omega) * R_WF * [u_r, v_r, 1].
Vec3 fsp_origin_world(const Pose& anchor, const FspRect& l);

/// World positions of the four corners. Coplanar with orthogonal adjacent
/// edges by construction.
std::array<Vec3, 4> fsp_corners_world(const Pose& anchor, const FspRect& l);

/// Unit-depth structural points: rect_structural_points evaluated at
/// (w_bar, w_bar/f). The 1/omega factor of the anchored projection scales
/// these to metric size.
std::array<Vec3, 4> fsp_unit_depth_points(const FspRect& l);

/// Predicted pixel of corner j seen from `camera`, with the landmark held in
/// `anchor` coordinates. Algebraically identical to projecting
/// fsp_corners_world but never forms the world corner explicitly.
std::optional<Projection> try_fsp_project(const CameraIntrinsics& K, const Pose& camera,
                                          const Pose& anchor, const FspRect& l,
                                          StructuralPointIndex j);
Pixel fsp_project(const CameraIntrinsics& K, const Pose& camera, const Pose& anchor,
                  const FspRect& l, StructuralPointIndex j);

Vec3 fhp_point_world(const Pose& anchor, const FhpPoint& p);
std::optional<Projection> try_fhp_project(const CameraIntrinsics& K, const Pose& camera,
                                          const Pose& anchor, const FhpPoint& p);
Pixel fhp_project(const CameraIntrinsics& K, const Pose& camera, const Pose& anchor,
                  const FhpPoint& p);

/// Recovers ray, orientation, form factor and w_bar from one view of the four
/// corners (pixel order as in StructuralPointIndex). The inverse depth is not
/// observable from a single view and is set to omega0; every positive choice
/// reproduces the same four pixels from the anchor frame.
///
/// The construction: direct linear transform from the unit square to the
/// observed pixels, premultiplied by K^-1; columns a1, a2 give the rotation
/// (nearest-rotation projection of [a1 a2 a1xa2]), a3 the translation up to
/// scale. f = |a1|/|a2| and w_bar = |a1|/a3.z are scale-free.
FspRect init_fsp_from_single_view(const CameraIntrinsics& K,
                                  const std::array<Pixel, 4>& corners_px,
                                  double omega0);

/// Point landmark from one observation: ray = normalized image coordinates,
/// inverse depth = omega0.
FhpPoint init_fhp_from_pixel(const CameraIntrinsics& K, const Pixel& px, double omega0);

}  // namespace fsp
