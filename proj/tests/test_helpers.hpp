#pragma once

#include <random>

#include "fsp/factor_graph.hpp"
#include "fsp/geometry.hpp"
#include "fsp/parameterization.hpp"

namespace fsp::test {

inline Vec3 random_unit_vector(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec3 v(gauss(rng), gauss(rng), gauss(rng));
  while (v.norm() < 1e-6) v = Vec3(gauss(rng), gauss(rng), gauss(rng));
  return v.normalized();
}

inline Rotation random_rotation(std::mt19937_64& rng, double max_angle = M_PI * 0.9) {
  std::uniform_real_distribution<double> u(0.0, max_angle);
  return so3_exp(u(rng) * random_unit_vector(rng));
}

inline Pose random_pose(std::mt19937_64& rng, double translation_scale = 1.0,
                        double max_angle = M_PI * 0.9) {
  std::uniform_real_distribution<double> u(-translation_scale, translation_scale);
  Pose p;
  p.translation = Vec3(u(rng), u(rng), u(rng));
  p.rotation = random_rotation(rng, max_angle);
  return p;
}

inline CameraIntrinsics test_camera() {
  return {460.0, 460.0, 320.0, 240.0, 640, 480};
}

// A landmark that stays comfortably inside the frustum of a camera at the
// anchor pose looking down its own +z.
inline FspRect random_visible_fsp(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ray_d(-0.25, 0.25);
  std::uniform_real_distribution<double> omega_d(0.25, 1.2);
  std::uniform_real_distribution<double> wbar_d(0.1, 0.5);
  std::uniform_real_distribution<double> f_d(0.5, 2.0);
  std::uniform_real_distribution<double> angle_d(0.0, 0.8);
  FspRect l;
  l.ray = Vec2(ray_d(rng), ray_d(rng));
  l.omega = omega_d(rng);
  l.w_bar = wbar_d(rng);
  l.form_factor = f_d(rng);
  l.rel_orientation = so3_exp(angle_d(rng) * random_unit_vector(rng));
  return l;
}

// Central-difference Jacobians of a factor, the independent oracle for the
// analytic blocks. Perturbs each variable of the factor on its manifold.
inline std::vector<Eigen::MatrixXd> numerical_jacobians(const FactorGraph& graph,
                                                        const Factor& factor,
                                                        double step = 1e-6) {
  const auto vars = factor_variables(factor);
  std::vector<Eigen::MatrixXd> out;
  for (const VariableId& id : vars) {
    const int dim = manifold_dim(id.kind());
    const int rdim = factor_residual_dim(factor);
    Eigen::MatrixXd j(rdim, dim);
    for (int c = 0; c < dim; ++c) {
      Eigen::VectorXd delta = Eigen::VectorXd::Zero(dim);

      FactorGraph plus = graph;
      delta(c) = step;
      plus.retract_variable(id, delta);
      const FactorEval ep = evaluate_factor(plus, factor, false);

      FactorGraph minus = graph;
      delta(c) = -step;
      minus.retract_variable(id, delta);
      const FactorEval em = evaluate_factor(minus, factor, false);

      j.col(c) = (ep.residual - em.residual) / (2.0 * step);
    }
    out.push_back(j);
  }
  return out;
}

inline double max_abs(const Eigen::MatrixXd& m) {
  return m.cwiseAbs().maxCoeff();
}

// Relative deviation of the analytic Jacobian from the finite-difference one.
inline double jacobian_relative_error(const Eigen::MatrixXd& analytic,
                                      const Eigen::MatrixXd& numeric) {
  const double scale = std::max(1.0, max_abs(numeric));
  return max_abs(analytic - numeric) / scale;
}

}  // namespace fsp::test
