#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "fsp/geometry.hpp"
#include "fsp/parameterization.hpp"
#include "fsp/simulator.hpp"

namespace fsp {

struct LengthMismatch : std::runtime_error {
  LengthMismatch() : std::runtime_error("estimate and ground truth lengths differ") {}
};

struct MissingLandmark : std::runtime_error {
  explicit MissingLandmark(std::int64_t id)
      : std::runtime_error("landmark " + std::to_string(id) +
                           " missing from estimate or ground truth") {}
};

struct RelPoseError {
  double t = 0;                // timestamp of the later frame of the pair
  double translation_m = 0;
  double rotation_rad = 0;
};

struct CornerError {
  std::int64_t object_id = 0;
  int corner_j = 1;
  double error_m = 0;
};

struct DimError {
  std::int64_t object_id = 0;
  double width_err_m = 0;
  double height_err_m = 0;
  double width_est = 0;
  double height_est = 0;
};

/// Error between consecutive-pose increments of the estimate and the ground
/// truth. Left-multiplying every pose of one sequence by a rigid transform
/// leaves the result unchanged.
std::vector<RelPoseError> relative_pose_error(std::span<const Pose> estimate,
                                              std::span<const Pose> ground_truth,
                                              std::span<const double> times = {});

/// Euclidean distance per corner between estimated and true world positions,
/// matched by (object id, corner index).
std::vector<CornerError> corner_errors(
    const std::map<std::int64_t, std::array<Vec3, 4>>& estimated_corners,
    const WorldSpec& world_gt);

/// Width/height error per object; only meaningful for rectangle landmarks.
std::vector<DimError> dim_errors(const std::map<std::int64_t, RectDims>& estimated_dims,
                                 const WorldSpec& world_gt);

struct MetricSummary {
  double median = 0;
  double mean = 0;
  double max = 0;
  std::size_t count = 0;
};

MetricSummary summarize(std::span<const double> values);

}  // namespace fsp
