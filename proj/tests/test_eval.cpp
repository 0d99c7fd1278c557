#include <doctest.h>

#include <random>

#include "fsp/eval.hpp"
#include "test_helpers.hpp"

using namespace fsp;

namespace {

std::vector<Pose> random_trajectory(std::mt19937_64& rng, int n) {
  std::vector<Pose> poses;
  Pose p;
  for (int i = 0; i < n; ++i) {
    poses.push_back(p);
    p = p * test::random_pose(rng, 0.2, 0.1);
  }
  return poses;
}

}  // namespace

TEST_CASE("relative pose error basics") {
  std::mt19937_64 rng(51);
  const auto gt = random_trajectory(rng, 10);

  SUBCASE("exact estimate gives zero error") {
    for (const RelPoseError& e : relative_pose_error(gt, gt)) {
      CHECK(e.translation_m < 1e-12);
      CHECK(e.rotation_rad < 1e-12);
    }
  }

  SUBCASE("a single offset pose shows up in the two adjacent pairs") {
    auto est = gt;
    est[4].translation += Vec3(0.01, 0, 0);
    const auto errors = relative_pose_error(est, gt);
    CHECK(errors[3].translation_m == doctest::Approx(0.01).epsilon(1e-9));
    CHECK(errors[4].translation_m == doctest::Approx(0.01).epsilon(1e-9));
    CHECK(errors[2].translation_m < 1e-12);
  }

  SUBCASE("length mismatch throws") {
    std::vector<Pose> shorter(gt.begin(), gt.end() - 1);
    CHECK_THROWS_AS(relative_pose_error(shorter, gt), LengthMismatch);
  }
}

TEST_CASE("relative pose error is invariant to a global rigid transform") {
  std::mt19937_64 rng(52);
  const auto gt = random_trajectory(rng, 20);
  const Pose g = test::random_pose(rng, 3.0);
  std::vector<Pose> moved;
  for (const Pose& p : gt) moved.push_back(g * p);

  const auto errors = relative_pose_error(moved, gt);
  for (const RelPoseError& e : errors) {
    CHECK(e.translation_m < 1e-12);
    CHECK(e.rotation_rad < 1e-12);
  }
}

TEST_CASE("corner errors") {
  WorldSpec world;
  RectObject obj;
  obj.id = 3;
  obj.pose.translation = Vec3(1, 2, 0.5);
  obj.pose.rotation = so3_exp(Vec3(0.1, -0.2, 0.3));
  obj.width = 1.2;
  obj.height = 0.8;
  world.objects = {obj};

  SUBCASE("exact estimate gives zero") {
    std::map<std::int64_t, std::array<Vec3, 4>> est{{3, obj.corners_world()}};
    for (const CornerError& e : corner_errors(est, world)) CHECK(e.error_m < 1e-12);
  }

  SUBCASE("a rigid offset moves all corners equally") {
    const Vec3 offset(0.02, -0.01, 0.005);
    auto corners = obj.corners_world();
    for (Vec3& c : corners) c += offset;
    std::map<std::int64_t, std::array<Vec3, 4>> est{{3, corners}};
    for (const CornerError& e : corner_errors(est, world))
      CHECK(e.error_m == doctest::Approx(offset.norm()).epsilon(1e-9));
  }

  SUBCASE("matches a brute-force reconstruction") {
    std::mt19937_64 rng(53);
    const Pose anchor = test::random_pose(rng);
    FspRect l = test::random_visible_fsp(rng);

    // Brute force: rebuild the corners from scratch through pose composition.
    const RectDims dims = fsp_dims(l);
    const Vec3 ray(l.ray.x(), l.ray.y(), 1.0);
    Pose object_pose;
    object_pose.translation = anchor.translation + (anchor.rotation * ray) / l.omega;
    object_pose.rotation = anchor.rotation * l.rel_orientation;
    std::array<Vec3, 4> brute;
    const auto pts = rect_structural_points(dims);
    for (int j = 0; j < 4; ++j) brute[j] = object_pose * pts[j];

    std::map<std::int64_t, std::array<Vec3, 4>> est{{3, fsp_corners_world(anchor, l)}};
    std::map<std::int64_t, std::array<Vec3, 4>> est_brute{{3, brute}};
    const auto a = corner_errors(est, world);
    const auto b = corner_errors(est_brute, world);
    for (int j = 0; j < 4; ++j) CHECK(std::abs(a[j].error_m - b[j].error_m) < 1e-12);
  }

  SUBCASE("missing landmark throws") {
    std::map<std::int64_t, std::array<Vec3, 4>> est{{99, obj.corners_world()}};
    CHECK_THROWS_AS(corner_errors(est, world), MissingLandmark);
  }
}

TEST_CASE("dimension errors") {
  WorldSpec world;
  RectObject obj;
  obj.id = 1;
  obj.width = 2.0;
  obj.height = 1.0;
  world.objects = {obj};

  SUBCASE("exact dims give zero") {
    std::map<std::int64_t, RectDims> est{{1, {2.0, 1.0}}};
    const auto errors = dim_errors(est, world);
    CHECK(errors[0].width_err_m == 0.0);
    CHECK(errors[0].height_err_m == 0.0);
  }

  SUBCASE("dims depend only on the w_bar/f/omega ratios") {
    FspRect l;
    l.w_bar = 1.0;
    l.form_factor = 2.0;
    l.omega = 0.5;
    const RectDims base = fsp_dims(l);
    l.w_bar *= 2.0;
    l.omega *= 2.0;
    const RectDims scaled = fsp_dims(l);
    CHECK(std::abs(base.w - scaled.w) < 1e-12);
    CHECK(std::abs(base.h - scaled.h) < 1e-12);
  }

  SUBCASE("one percent of w_bar on a 2 m width is 2 cm") {
    FspRect l;
    l.w_bar = 1.0;
    l.form_factor = 2.0;
    l.omega = 0.5;  // w = 2, h = 1
    l.w_bar *= 1.01;
    std::map<std::int64_t, RectDims> est{{1, fsp_dims(l)}};
    const auto errors = dim_errors(est, world);
    CHECK(errors[0].width_err_m == doctest::Approx(0.02).epsilon(1e-9));
  }

  SUBCASE("dims are independent of the anchor pose") {
    std::mt19937_64 rng(54);
    const FspRect l = test::random_visible_fsp(rng);
    const RectDims d = fsp_dims(l);
    // fsp_dims never touches the anchor; perturbing it cannot matter. Checked
    // through the corner construction instead: corner distances match dims
    // for any anchor.
    for (int i = 0; i < 10; ++i) {
      const Pose anchor = test::random_pose(rng, 3.0);
      const auto c = fsp_corners_world(anchor, l);
      CHECK(std::abs((c[1] - c[0]).norm() - d.w) < 1e-9);
      CHECK(std::abs((c[3] - c[0]).norm() - d.h) < 1e-9);
    }
  }
}

TEST_CASE("metric summaries") {
  const std::vector<double> values{3.0, 1.0, 2.0, 10.0};
  const MetricSummary s = summarize(values);
  CHECK(s.median == doctest::Approx(2.5));
  CHECK(s.mean == doctest::Approx(4.0));
  CHECK(s.max == doctest::Approx(10.0));
  CHECK(s.count == 4);

  const MetricSummary empty = summarize({});
  CHECK(empty.count == 0);
}
