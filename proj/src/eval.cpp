#include "fsp/eval.hpp"

#include <algorithm>
#include <cmath>

namespace fsp {

std::vector<RelPoseError> relative_pose_error(std::span<const Pose> estimate,
                                              std::span<const Pose> ground_truth,
                                              std::span<const double> times) {
  if (estimate.size() != ground_truth.size()) throw LengthMismatch();
  if (!times.empty() && times.size() != estimate.size()) throw LengthMismatch();

  std::vector<RelPoseError> out;
  if (estimate.size() < 2) return out;
  out.reserve(estimate.size() - 1);
  for (std::size_t i = 1; i < estimate.size(); ++i) {
    const Pose d_est = estimate[i - 1].inverse() * estimate[i];
    const Pose d_gt = ground_truth[i - 1].inverse() * ground_truth[i];
    RelPoseError e;
    e.t = times.empty() ? static_cast<double>(i) : times[i];
    e.translation_m = (d_est.translation - d_gt.translation).norm();
    e.rotation_rad = so3_log(d_gt.rotation.inverse() * d_est.rotation).norm();
    out.push_back(e);
  }
  return out;
}

std::vector<CornerError> corner_errors(
    const std::map<std::int64_t, std::array<Vec3, 4>>& estimated_corners,
    const WorldSpec& world_gt) {
  std::vector<CornerError> out;
  for (const auto& [id, est] : estimated_corners) {
    const auto it = std::find_if(world_gt.objects.begin(), world_gt.objects.end(),
                                 [id = id](const RectObject& o) { return o.id == id; });
    if (it == world_gt.objects.end()) throw MissingLandmark(id);
    const auto gt = it->corners_world();
    for (int j = 0; j < 4; ++j) out.push_back({id, j + 1, (est[j] - gt[j]).norm()});
  }
  return out;
}

std::vector<DimError> dim_errors(const std::map<std::int64_t, RectDims>& estimated_dims,
                                 const WorldSpec& world_gt) {
  std::vector<DimError> out;
  for (const auto& [id, dims] : estimated_dims) {
    const auto it = std::find_if(world_gt.objects.begin(), world_gt.objects.end(),
                                 [id = id](const RectObject& o) { return o.id == id; });
    if (it == world_gt.objects.end()) throw MissingLandmark(id);
    out.push_back({id, std::abs(dims.w - it->width), std::abs(dims.h - it->height),
                   dims.w, dims.h});
  }
  return out;
}

MetricSummary summarize(std::span<const double> values) {
  MetricSummary s;
  s.count = values.size();
  if (values.empty()) return s;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  s.median = (n % 2 == 1) ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  double sum = 0;
  for (double v : sorted) sum += v;
  s.mean = sum / static_cast<double>(n);
  s.max = sorted.back();
  return s;
}

}  // namespace fsp
