#include <doctest.h>

#include <cmath>
#include <random>

#include "fsp/imu.hpp"
#include "fsp/simulator.hpp"
#include "test_helpers.hpp"

using namespace fsp;

namespace {

std::vector<ImuSample> constant_samples(const Vec3& accel, const Vec3& gyro, double dt,
                                        double rate = 100.0) {
  std::vector<ImuSample> samples;
  const long n = std::lround(dt * rate);
  for (long k = 0; k <= n; ++k)
    samples.push_back({static_cast<double>(k) / rate, accel, gyro});
  return samples;
}

}  // namespace

TEST_CASE("preintegration of a null stream") {
  const auto samples = constant_samples(Vec3::Zero(), Vec3::Zero(), 1.0);
  const Preintegrated pre = preintegrate(samples, ImuBias{});
  CHECK(pre.dt == doctest::Approx(1.0));
  CHECK(pre.delta_p.norm() == 0.0);
  CHECK(pre.delta_v.norm() == 0.0);
  CHECK(so3_log(pre.delta_r).norm() == 0.0);
}

TEST_CASE("preintegration of constant acceleration") {
  const auto samples = constant_samples(Vec3(1, 0, 0), Vec3::Zero(), 2.0);
  const Preintegrated pre = preintegrate(samples, ImuBias{});
  CHECK((pre.delta_v - Vec3(2, 0, 0)).norm() < 1e-12);
  CHECK((pre.delta_p - Vec3(2, 0, 0)).norm() < 1e-12);
}

TEST_CASE("preintegration of constant rotation rate") {
  const auto samples = constant_samples(Vec3::Zero(), Vec3(0, 0, M_PI / 2), 1.0);
  const Preintegrated pre = preintegrate(samples, ImuBias{});
  CHECK((so3_log(pre.delta_r) - Vec3(0, 0, M_PI / 2)).norm() < 1e-9);
}

TEST_CASE("preintegration input validation") {
  CHECK_THROWS_AS(preintegrate({}, ImuBias{}), EmptyImuBuffer);

  std::vector<ImuSample> one = {{0.0, Vec3::Zero(), Vec3::Zero()}};
  CHECK_THROWS_AS(preintegrate(one, ImuBias{}), DegenerateInterval);

  std::vector<ImuSample> bad = {{0.0, Vec3::Zero(), Vec3::Zero()},
                                {0.1, Vec3::Zero(), Vec3::Zero()},
                                {0.1, Vec3::Zero(), Vec3::Zero()}};
  CHECK_THROWS_AS(preintegrate(bad, ImuBias{}), NonMonotonicTimestamps);
}

TEST_CASE("ternary residual is zero for a stationary platform") {
  std::mt19937_64 rng(21);
  const Vec3 gravity(0, 0, -9.81);
  Pose pose = test::random_pose(rng);
  const Vec3 accel = pose.rotation.inverse() * (-gravity);

  const auto s1 = constant_samples(accel, Vec3::Zero(), 0.5);
  auto s2 = s1;
  for (ImuSample& s : s2) s.t += 0.5;
  const Preintegrated pre1 = preintegrate(s1, ImuBias{});
  const Preintegrated pre2 = preintegrate(s2, ImuBias{});

  const Vec9 r = imu_ternary_residual(pose, pose, pose, pre1, pre2, ImuBias{}, gravity);
  CHECK(r.lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("ternary residual vanishes on an analytic trajectory") {
  TrajectorySpec traj;
  traj.duration_s = 2.0;
  traj.x = {0.0, {{0.8, 0.4, -M_PI / 2}}};
  traj.y = {0.0, {{0.5, 0.3, M_PI / 2}}};
  traj.z = {1.4, {{0.2, 0.6, -M_PI / 2}}};
  traj.yaw = {0.0, {{0.3, 0.25, M_PI / 2}}};

  const Vec3 gravity(0, 0, -9.81);
  ImuSpec imu;
  imu.rate_hz = 400.0;
  std::mt19937_64 rng(22);
  const auto samples = synthesize_imu(traj, gravity, imu, rng);

  const double frame_dt = 0.1;
  std::vector<Pose> poses;
  std::vector<Preintegrated> pres;
  const int frames = 21;
  for (int f = 0; f < frames; ++f)
    poses.push_back(sample_trajectory(traj, f * frame_dt).pose);
  const long per = std::lround(frame_dt * imu.rate_hz);
  for (int f = 0; f + 1 < frames; ++f) {
    std::span<const ImuSample> span(samples.data() + f * per, per + 1);
    pres.push_back(preintegrate(span, ImuBias{}));
  }

  for (int f = 0; f + 2 < frames; ++f) {
    const Vec9 r = imu_ternary_residual(poses[f], poses[f + 1], poses[f + 2], pres[f],
                                        pres[f + 1], ImuBias{}, gravity);
    CHECK(r.lpNorm<Eigen::Infinity>() < 1e-6);
  }
}

TEST_CASE("position residual reports a translation perturbation exactly") {
  std::mt19937_64 rng(23);
  const Vec3 gravity(0, 0, -9.81);
  const Pose pose = test::random_pose(rng);
  const Vec3 accel = pose.rotation.inverse() * (-gravity);

  const auto s1 = constant_samples(accel, Vec3::Zero(), 0.5);
  auto s2 = s1;
  for (ImuSample& s : s2) s.t += 0.5;
  const Preintegrated pre1 = preintegrate(s1, ImuBias{});
  const Preintegrated pre2 = preintegrate(s2, ImuBias{});

  const double eps = 1e-3;
  Pose moved = pose;
  moved.translation += Vec3(eps, 0, 0);
  const Vec9 r = imu_ternary_residual(pose, pose, moved, pre1, pre2, ImuBias{}, gravity);
  CHECK((r.head<3>() - Vec3(eps, 0, 0)).norm() < 1e-12);
  CHECK(r.tail<6>().norm() < 1e-10);
}

TEST_CASE("bias correction is first-order accurate") {
  // Smoothly varying stream, integrated at the reference bias.
  std::vector<ImuSample> samples;
  for (int k = 0; k <= 100; ++k) {
    const double t = 0.01 * k;
    samples.push_back({t,
                       Vec3(1.2 * std::sin(3 * t), -0.7 * std::cos(2 * t), 9.0 + 0.4 * t),
                       Vec3(0.5 * std::cos(4 * t), 0.3 * std::sin(2 * t), -0.2)});
  }
  const ImuBias ref{Vec3(0.01, -0.02, 0.015), Vec3(0.002, 0.001, -0.003)};
  const Preintegrated pre = preintegrate(samples, ref);

  const Vec6 direction = (Vec6() << 0.3, -0.8, 0.5, -0.4, 0.7, 0.2).finished().normalized();
  auto error_at = [&](double magnitude) {
    ImuBias b = ref;
    b.accel += magnitude * direction.head<3>();
    b.gyro += magnitude * direction.tail<3>();
    const Preintegrated exact = preintegrate(samples, b);
    double err = (pre.corrected_delta_p(b) - exact.delta_p).norm();
    err = std::max(err, (pre.corrected_delta_v(b) - exact.delta_v).norm());
    err = std::max(err,
                   so3_log(exact.delta_r.inverse() * pre.corrected_delta_r(b)).norm());
    return err;
  };

  const double e_coarse = error_at(1e-3);
  const double e_fine = error_at(1e-4);
  CHECK(e_coarse < 1e-4);
  CHECK(e_coarse / e_fine > 30.0);  // quadratic decay gives ~100
}

TEST_CASE("preintegration concatenates across a split") {
  std::vector<ImuSample> samples;
  for (int k = 0; k <= 100; ++k) {
    const double t = 0.01 * k;
    const bool second_half = t >= 0.5;
    samples.push_back({t, second_half ? Vec3(0.5, -1.0, 9.6) : Vec3(1.0, 0.2, 9.9),
                       second_half ? Vec3(0.1, 0.4, -0.2) : Vec3(-0.3, 0.2, 0.5)});
  }
  const ImuBias bias{Vec3(0.01, 0, -0.01), Vec3(0.001, -0.002, 0)};

  const Preintegrated full = preintegrate(samples, bias);
  const std::span<const ImuSample> all(samples);
  const Preintegrated a = preintegrate(all.subspan(0, 51), bias);
  const Preintegrated b = preintegrate(all.subspan(50), bias);

  const Rotation dr = a.delta_r * b.delta_r;
  const Vec3 dv = a.delta_v + a.delta_r * b.delta_v;
  const Vec3 dp = a.delta_p + a.delta_v * b.dt + a.delta_r * b.delta_p;

  CHECK(std::abs(a.dt + b.dt - full.dt) < 1e-12);
  CHECK(so3_log(dr.inverse() * full.delta_r).norm() < 1e-9);
  CHECK((dv - full.delta_v).norm() < 1e-9);
  CHECK((dp - full.delta_p).norm() < 1e-9);
}

TEST_CASE("preintegrated information is symmetric positive definite") {
  auto samples = constant_samples(Vec3(0.3, -0.2, 9.8), Vec3(0.1, 0.05, -0.2), 0.2);
  const Preintegrated pre = preintegrate(samples, ImuBias{}, ImuNoise{0.02, 0.002});
  CHECK((pre.info - pre.info.transpose()).cwiseAbs().maxCoeff() < 1e-6);
  const Eigen::LLT<Mat9> llt(pre.info);
  CHECK(llt.info() == Eigen::Success);

  const Preintegrated pre2 = preintegrate(samples, ImuBias{}, ImuNoise{0.02, 0.002});
  const Mat9 info = ternary_information(pre, pre2);
  CHECK((info - info.transpose()).cwiseAbs().maxCoeff() < 1e-6);
  const Eigen::LLT<Mat9> llt2(info);
  CHECK(llt2.info() == Eigen::Success);

  // Noiseless streams carry unit information.
  const Preintegrated clean = preintegrate(samples, ImuBias{});
  CHECK((clean.info - Mat9::Identity()).cwiseAbs().maxCoeff() == 0.0);
}
