#include <doctest.h>

#include <random>

#include "fsp/parameterization.hpp"
#include "test_helpers.hpp"

using namespace fsp;

TEST_CASE("rect structural points") {
  const auto pts = rect_structural_points({2.0, 1.0});
  CHECK((pts[0] - Vec3(0, 0, 0)).norm() == 0.0);
  CHECK((pts[1] - Vec3(2, 0, 0)).norm() == 0.0);
  CHECK((pts[2] - Vec3(2, 1, 0)).norm() == 0.0);
  CHECK((pts[3] - Vec3(0, 1, 0)).norm() == 0.0);

  const auto unit = rect_structural_points({1.0, 1.0});
  CHECK((unit[2] - Vec3(1, 1, 0)).norm() == 0.0);

  for (const Vec3& p : rect_structural_points({0.9, 2.1})) CHECK(p.z() == 0.0);
}

TEST_CASE("fsp dims") {
  FspRect l;
  l.w_bar = 0.5;
  l.form_factor = 2.0;
  l.omega = 0.25;
  const RectDims d = fsp_dims(l);
  CHECK(d.w == doctest::Approx(2.0));
  CHECK(d.h == doctest::Approx(1.0));

  l = FspRect{};
  CHECK(fsp_dims(l).w == doctest::Approx(1.0));
  CHECK(fsp_dims(l).h == doctest::Approx(1.0));

  l.w_bar = 0.45;
  l.form_factor = 0.45;
  l.omega = 0.5;
  CHECK(fsp_dims(l).w == doctest::Approx(0.9));
  CHECK(fsp_dims(l).h == doctest::Approx(2.0));

  l.omega = -1.0;
  CHECK_THROWS_AS(fsp_dims(l), DegenerateParam);
  l.omega = 1.0;
  l.form_factor = 0.0;
  CHECK_THROWS_AS(fsp_dims(l), DegenerateParam);
}

TEST_CASE("fsp origin in the world frame") {
  FspRect l;
  CHECK((fsp_origin_world(Pose::identity(), l) - Vec3(0, 0, 1)).norm() < 1e-15);

  l.ray = Vec2(0.5, 0);
  l.omega = 0.5;
  CHECK((fsp_origin_world(Pose::identity(), l) - Vec3(1, 0, 2)).norm() < 1e-15);

  Pose anchor;
  anchor.translation = Vec3(1, 2, 3);
  anchor.rotation = so3_exp(Vec3(0, M_PI / 2, 0));
  l = FspRect{};
  const Vec3 expected = anchor.translation + anchor.rotation * Vec3(0, 0, 1);
  CHECK((fsp_origin_world(anchor, l) - expected).norm() < 1e-12);

  l.omega = 0.0;
  CHECK_THROWS_AS(fsp_origin_world(Pose::identity(), l), DegenerateParam);
}

TEST_CASE("fsp corners compose origin, orientation and dims") {
  FspRect l;  // ray (0,0), omega 1, w_bar 1, f 1, identity orientation
  const auto corners = fsp_corners_world(Pose::identity(), l);
  CHECK((corners[0] - Vec3(0, 0, 1)).norm() < 1e-15);
  CHECK((corners[1] - Vec3(1, 0, 1)).norm() < 1e-15);
  CHECK((corners[2] - Vec3(1, 1, 1)).norm() < 1e-15);
  CHECK((corners[3] - Vec3(0, 1, 1)).norm() < 1e-15);
}

TEST_CASE("fsp corners are rigid, orthogonal and planar") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const Pose anchor = test::random_pose(rng);
    const FspRect l = test::random_visible_fsp(rng);
    const RectDims dims = fsp_dims(l);
    const auto c = fsp_corners_world(anchor, l);

    CHECK(std::abs((c[1] - c[0]).norm() - dims.w) < 1e-9);
    CHECK(std::abs((c[3] - c[0]).norm() - dims.h) < 1e-9);
    const double diag = std::sqrt(dims.w * dims.w + dims.h * dims.h);
    CHECK(std::abs((c[2] - c[0]).norm() - diag) < 1e-9);
    CHECK(std::abs((c[1] - c[0]).dot(c[3] - c[0])) < 1e-9);

    const Vec3 n = (c[1] - c[0]).cross(c[3] - c[0]).normalized();
    CHECK(std::abs(n.dot(c[2] - c[0])) < 1e-9);
  }
}

TEST_CASE("fsp projection examples") {
  const CameraIntrinsics k{100, 100, 50, 50, 100, 100};
  FspRect l;
  l.w_bar = 0.5;

  const Pixel p1 = fsp_project(k, Pose::identity(), Pose::identity(), l,
                               StructuralPointIndex(1));
  CHECK(p1.u == doctest::Approx(50.0));
  CHECK(p1.v == doctest::Approx(50.0));

  const Pixel p2 = fsp_project(k, Pose::identity(), Pose::identity(), l,
                               StructuralPointIndex(2));
  CHECK(p2.u == doctest::Approx(100.0));
  CHECK(p2.v == doctest::Approx(50.0));

  // From the anchor frame the prediction cannot depend on omega.
  l.omega = 3.0;
  for (int j = 1; j <= 4; ++j) {
    const Pixel a = fsp_project(k, Pose::identity(), Pose::identity(), l,
                                StructuralPointIndex(j));
    l.omega = 1.0;
    const Pixel b = fsp_project(k, Pose::identity(), Pose::identity(), l,
                                StructuralPointIndex(j));
    l.omega = 3.0;
    CHECK(std::abs(a.u - b.u) < 1e-12);
    CHECK(std::abs(a.v - b.v) < 1e-12);
  }
}

TEST_CASE("omega invariance at the anchor frame") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> scale(0.05, 20.0);
  const CameraIntrinsics k = test::test_camera();
  for (int i = 0; i < 500; ++i) {
    const Pose anchor = test::random_pose(rng);
    FspRect l = test::random_visible_fsp(rng);
    for (int j = 1; j <= 4; ++j) {
      const Pixel base = fsp_project(k, anchor, anchor, l, StructuralPointIndex(j));
      FspRect scaled = l;
      scaled.omega = scale(rng);
      const Pixel other = fsp_project(k, anchor, anchor, scaled, StructuralPointIndex(j));
      CHECK(std::abs(base.u - other.u) < 1e-9);
      CHECK(std::abs(base.v - other.v) < 1e-9);
    }
  }
}

TEST_CASE("fsp_project equals projecting the world corners") {
  std::mt19937_64 rng(13);
  const CameraIntrinsics k = test::test_camera();
  int checked = 0;
  while (checked < 200) {
    const Pose anchor = test::random_pose(rng);
    const Pose camera = anchor * test::random_pose(rng, 0.3, 0.2);
    const FspRect l = test::random_visible_fsp(rng);
    const auto corners = fsp_corners_world(anchor, l);
    for (int j = 0; j < 4; ++j) {
      const auto direct = try_fsp_project(k, camera, anchor, l, StructuralPointIndex(j + 1));
      const auto via_world = try_project(k, camera, corners[j]);
      REQUIRE(direct.has_value() == via_world.has_value());
      if (!direct) continue;
      CHECK(std::abs(direct->pixel.u - via_world->pixel.u) < 1e-9);
      CHECK(std::abs(direct->pixel.v - via_world->pixel.v) < 1e-9);
      ++checked;
    }
  }
}

TEST_CASE("fhp point and projection") {
  FhpPoint p;
  p.omega = 2.0;
  CHECK((fhp_point_world(Pose::identity(), p) - Vec3(0, 0, 0.5)).norm() < 1e-15);

  const CameraIntrinsics k = test::test_camera();
  std::mt19937_64 rng(14);
  const Pose anchor = test::random_pose(rng);
  p.ray = Vec2(0.1, -0.2);
  const Pixel a = fhp_project(k, anchor, anchor, p);
  p.omega = 0.37;
  const Pixel b = fhp_project(k, anchor, anchor, p);
  CHECK(std::abs(a.u - b.u) < 1e-9);
  CHECK(std::abs(a.v - b.v) < 1e-9);
}

TEST_CASE("fhp init recovers the viewing direction") {
  const CameraIntrinsics k = test::test_camera();
  const Vec3 point(0.4, -0.3, 2.5);
  const Pixel px = project(k, Pose::identity(), point);
  const FhpPoint p = init_fhp_from_pixel(k, px, 1.0);
  const Vec3 recovered = fhp_point_world(Pose::identity(), p);
  CHECK((recovered.normalized() - point.normalized()).norm() < 1e-12);
}

TEST_CASE("single view init: fronto-parallel square") {
  const CameraIntrinsics k = test::test_camera();
  // Ground truth: unit square at depth 2, centered on the optical axis.
  FspRect gt;
  gt.ray = Vec2(-0.25, -0.25);
  gt.omega = 0.5;
  gt.w_bar = 0.5;  // w = 1 m at depth 2
  gt.form_factor = 1.0;

  std::array<Pixel, 4> pixels;
  for (int j = 1; j <= 4; ++j)
    pixels[j - 1] = fsp_project(k, Pose::identity(), Pose::identity(), gt,
                                StructuralPointIndex(j));

  const FspRect init = init_fsp_from_single_view(k, pixels, 1.0);
  CHECK(init.form_factor == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(so3_log(init.rel_orientation).norm() < 1e-9);
  CHECK(init.omega == doctest::Approx(1.0));
  // w_bar is observable regardless of the omega seed.
  CHECK(init.w_bar == doctest::Approx(0.5).epsilon(1e-9));

  for (int j = 1; j <= 4; ++j) {
    const Pixel re = fsp_project(k, Pose::identity(), Pose::identity(), init,
                                 StructuralPointIndex(j));
    CHECK(std::abs(re.u - pixels[j - 1].u) < 1e-6);
    CHECK(std::abs(re.v - pixels[j - 1].v) < 1e-6);
  }
}

TEST_CASE("single view init recovers shape and orientation of random rectangles") {
  std::mt19937_64 rng(15);
  const CameraIntrinsics k = test::test_camera();
  for (int i = 0; i < 200; ++i) {
    FspRect gt = test::random_visible_fsp(rng);
    gt.omega = 0.5;

    std::array<Pixel, 4> pixels;
    bool ok = true;
    for (int j = 1; j <= 4; ++j) {
      const auto p = try_fsp_project(k, Pose::identity(), Pose::identity(), gt,
                                     StructuralPointIndex(j));
      if (!p) {
        ok = false;
        break;
      }
      pixels[j - 1] = p->pixel;
    }
    if (!ok) continue;

    const FspRect init = init_fsp_from_single_view(k, pixels, 7.0);
    CHECK(std::abs(init.form_factor - gt.form_factor) < 1e-6);
    CHECK(so3_log(init.rel_orientation.inverse() * gt.rel_orientation).norm() < 1e-6);
    CHECK(std::abs(init.w_bar - gt.w_bar) < 1e-6);
    CHECK((init.ray - gt.ray).norm() < 1e-9);
  }
}

TEST_CASE("single view init is reprojection-exact for any omega seed") {
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> omega0(0.0, 1.0);
  const CameraIntrinsics k = test::test_camera();
  const double seeds[] = {1e-2, 0.1, 1.0, 10.0, 1e2};
  for (int i = 0; i < 100; ++i) {
    const FspRect gt = test::random_visible_fsp(rng);
    std::array<Pixel, 4> pixels;
    bool ok = true;
    for (int j = 1; j <= 4; ++j) {
      const auto p = try_fsp_project(k, Pose::identity(), Pose::identity(), gt,
                                     StructuralPointIndex(j));
      if (!p) {
        ok = false;
        break;
      }
      pixels[j - 1] = p->pixel;
    }
    if (!ok) continue;

    for (double w0 : seeds) {
      const FspRect init = init_fsp_from_single_view(k, pixels, w0);
      for (int j = 1; j <= 4; ++j) {
        const Pixel re = fsp_project(k, Pose::identity(), Pose::identity(), init,
                                     StructuralPointIndex(j));
        CHECK(std::abs(re.u - pixels[j - 1].u) < 1e-6);
        CHECK(std::abs(re.v - pixels[j - 1].v) < 1e-6);
      }
    }
  }
}

TEST_CASE("single view init rejects collinear corners") {
  const CameraIntrinsics k = test::test_camera();
  const std::array<Pixel, 4> collinear = {Pixel{100, 100}, Pixel{200, 150},
                                          Pixel{300, 200}, Pixel{400, 250}};
  CHECK_THROWS_AS(init_fsp_from_single_view(k, collinear, 1.0), DegenerateView);
}

TEST_CASE("structural point index validates its range") {
  CHECK_THROWS_AS(StructuralPointIndex(0), std::out_of_range);
  CHECK_THROWS_AS(StructuralPointIndex(5), std::out_of_range);
  CHECK(StructuralPointIndex(3).offset() == 2);
}
