#include "fsp/factor_graph.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>

namespace fsp {

int manifold_dim(VarKind kind) {
  switch (kind) {
    case VarKind::Pose: return 6;
    case VarKind::Fsp: return 8;
    case VarKind::Fhp: return 3;
    case VarKind::Bias: return 6;
  }
  return 0;
}

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::NoFactors: return "no_factors";
    case StopReason::NoFreeVariables: return "no_free_variables";
    case StopReason::StepTolerance: return "step_tolerance";
    case StopReason::RelativeDecrease: return "relative_decrease";
    case StopReason::StepRejected: return "step_rejected";
    case StopReason::MaxIterations: return "max_iterations";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Variable management

VariableId FactorGraph::add_pose_variable(const Pose& value) {
  values_.emplace_back(value);
  kinds_.push_back(VarKind::Pose);
  fixed_.push_back(false);
  return VariableId(static_cast<std::int32_t>(values_.size() - 1), VarKind::Pose);
}

VariableId FactorGraph::add_fsp_variable(const FspRect& value) {
  if (!value.positive())
    throw std::invalid_argument("add_fsp_variable: omega, w_bar and form factor must be positive");
  values_.emplace_back(value);
  kinds_.push_back(VarKind::Fsp);
  fixed_.push_back(false);
  return VariableId(static_cast<std::int32_t>(values_.size() - 1), VarKind::Fsp);
}

VariableId FactorGraph::add_fhp_variable(const FhpPoint& value) {
  if (!value.positive())
    throw std::invalid_argument("add_fhp_variable: omega must be positive");
  values_.emplace_back(value);
  kinds_.push_back(VarKind::Fhp);
  fixed_.push_back(false);
  return VariableId(static_cast<std::int32_t>(values_.size() - 1), VarKind::Fhp);
}

VariableId FactorGraph::add_bias_variable(const ImuBias& value) {
  values_.emplace_back(value);
  kinds_.push_back(VarKind::Bias);
  fixed_.push_back(false);
  return VariableId(static_cast<std::int32_t>(values_.size() - 1), VarKind::Bias);
}

const FactorGraph::Value& FactorGraph::checked(VariableId id, VarKind kind) const {
  if (!id.valid() || static_cast<std::size_t>(id.index()) >= values_.size() ||
      kinds_[id.index()] != kind || id.kind() != kind) {
    throw UnknownVariable();
  }
  return values_[id.index()];
}

void FactorGraph::fix_variable(VariableId id) {
  if (!id.valid() || static_cast<std::size_t>(id.index()) >= values_.size())
    throw UnknownVariable();
  fixed_[id.index()] = true;
}

bool FactorGraph::is_fixed(VariableId id) const {
  if (!id.valid() || static_cast<std::size_t>(id.index()) >= values_.size())
    throw UnknownVariable();
  return fixed_[id.index()];
}

const Pose& FactorGraph::pose(VariableId id) const {
  return std::get<Pose>(checked(id, VarKind::Pose));
}
const FspRect& FactorGraph::fsp(VariableId id) const {
  return std::get<FspRect>(checked(id, VarKind::Fsp));
}
const FhpPoint& FactorGraph::fhp(VariableId id) const {
  return std::get<FhpPoint>(checked(id, VarKind::Fhp));
}
const ImuBias& FactorGraph::bias(VariableId id) const {
  return std::get<ImuBias>(checked(id, VarKind::Bias));
}

void FactorGraph::set_pose(VariableId id, const Pose& value) {
  checked(id, VarKind::Pose);
  values_[id.index()] = value;
}
void FactorGraph::set_fsp(VariableId id, const FspRect& value) {
  checked(id, VarKind::Fsp);
  values_[id.index()] = value;
}
void FactorGraph::set_fhp(VariableId id, const FhpPoint& value) {
  checked(id, VarKind::Fhp);
  values_[id.index()] = value;
}
void FactorGraph::set_bias(VariableId id, const ImuBias& value) {
  checked(id, VarKind::Bias);
  values_[id.index()] = value;
}

void FactorGraph::retract_variable(VariableId id, const Eigen::VectorXd& delta) {
  if (!id.valid() || static_cast<std::size_t>(id.index()) >= values_.size())
    throw UnknownVariable();
  if (delta.size() != manifold_dim(kinds_[id.index()]))
    throw std::invalid_argument("retract_variable: delta dimension mismatch");
  Value& v = values_[id.index()];
  switch (kinds_[id.index()]) {
    case VarKind::Pose: {
      std::get<Pose>(v) = std::get<Pose>(v).retracted(delta.head<6>());
      break;
    }
    case VarKind::Fsp: {
      FspRect& l = std::get<FspRect>(v);
      l.ray += delta.head<2>();
      l.omega += delta(2);
      l.w_bar += delta(3);
      l.form_factor += delta(4);
      l.rel_orientation = l.rel_orientation.retracted(delta.segment<3>(5));
      break;
    }
    case VarKind::Fhp: {
      FhpPoint& p = std::get<FhpPoint>(v);
      p.ray += delta.head<2>();
      p.omega += delta(2);
      break;
    }
    case VarKind::Bias: {
      ImuBias& b = std::get<ImuBias>(v);
      b.accel += delta.head<3>();
      b.gyro += delta.tail<3>();
      break;
    }
  }
}

bool FactorGraph::variable_in_domain(VariableId id) const {
  if (!id.valid() || static_cast<std::size_t>(id.index()) >= values_.size())
    throw UnknownVariable();
  const Value& v = values_[id.index()];
  switch (kinds_[id.index()]) {
    case VarKind::Fsp: return std::get<FspRect>(v).positive();
    case VarKind::Fhp: return std::get<FhpPoint>(v).positive();
    default: return true;
  }
}

int FactorGraph::dimension() const {
  int dim = 0;
  for (VarKind k : kinds_) dim += manifold_dim(k);
  return dim;
}

int FactorGraph::dimension_of_kind(VarKind kind) const {
  int dim = 0;
  for (VarKind k : kinds_)
    if (k == kind) dim += manifold_dim(k);
  return dim;
}

int FactorGraph::free_dimension() const {
  int dim = 0;
  for (std::size_t i = 0; i < kinds_.size(); ++i)
    if (!fixed_[i]) dim += manifold_dim(kinds_[i]);
  return dim;
}

// ---------------------------------------------------------------------------
// Factor metadata and validation

std::vector<VariableId> factor_variables(const Factor& f) {
  return std::visit(
      [](const auto& factor) -> std::vector<VariableId> {
        using T = std::decay_t<decltype(factor)>;
        if constexpr (std::is_same_v<T, FspReprojectionFactor> ||
                      std::is_same_v<T, FhpReprojectionFactor>) {
          return {factor.camera, factor.anchor, factor.landmark};
        } else if constexpr (std::is_same_v<T, ImuTernaryFactor>) {
          return {factor.pose_a, factor.pose_b, factor.pose_c, factor.bias};
        } else if constexpr (std::is_same_v<T, BiasWalkFactor>) {
          return {factor.bias_a, factor.bias_b};
        } else {
          return {factor.pose};
        }
      },
      f);
}

int factor_residual_dim(const Factor& f) {
  return std::visit(
      [](const auto& factor) -> int {
        using T = std::decay_t<decltype(factor)>;
        if constexpr (std::is_same_v<T, FspReprojectionFactor>) return 8;
        else if constexpr (std::is_same_v<T, FhpReprojectionFactor>) return 2;
        else if constexpr (std::is_same_v<T, ImuTernaryFactor>) return 9;
        else if constexpr (std::is_same_v<T, BiasWalkFactor>) return 6;
        else return 6;
      },
      f);
}

namespace {

Eigen::MatrixXd factor_information_dyn(const Factor& f) {
  return std::visit([](const auto& factor) -> Eigen::MatrixXd { return factor.information; }, f);
}

void require_spd(const Eigen::MatrixXd& info) {
  if (!info.isApprox(info.transpose(), 1e-9))
    throw std::invalid_argument("factor information matrix must be symmetric");
  const Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("factor information matrix must be positive definite");
}

std::vector<VarKind> factor_kinds(const Factor& f) {
  return std::visit(
      [](const auto& factor) -> std::vector<VarKind> {
        using T = std::decay_t<decltype(factor)>;
        if constexpr (std::is_same_v<T, FspReprojectionFactor>) {
          return {VarKind::Pose, VarKind::Pose, VarKind::Fsp};
        } else if constexpr (std::is_same_v<T, FhpReprojectionFactor>) {
          return {VarKind::Pose, VarKind::Pose, VarKind::Fhp};
        } else if constexpr (std::is_same_v<T, ImuTernaryFactor>) {
          return {VarKind::Pose, VarKind::Pose, VarKind::Pose, VarKind::Bias};
        } else if constexpr (std::is_same_v<T, BiasWalkFactor>) {
          return {VarKind::Bias, VarKind::Bias};
        } else {
          return {VarKind::Pose};
        }
      },
      f);
}

}  // namespace

void FactorGraph::add_factor(Factor f) {
  const auto vars = factor_variables(f);
  const auto kinds = factor_kinds(f);
  for (std::size_t i = 0; i < vars.size(); ++i) checked(vars[i], kinds[i]);
  require_spd(factor_information_dyn(f));

  // A landmark that names its anchor must be wired to exactly that pose
  // variable; anchors are shared, never duplicated.
  if (const auto* fsp_f = std::get_if<FspReprojectionFactor>(&f)) {
    const std::int64_t anchor_id = fsp(fsp_f->landmark).anchor_id;
    if (anchor_id >= 0 && anchor_id != fsp_f->anchor.index())
      throw std::invalid_argument("fsp factor anchor does not match the landmark's anchor");
  } else if (const auto* fhp_f = std::get_if<FhpReprojectionFactor>(&f)) {
    const std::int64_t anchor_id = fhp(fhp_f->landmark).anchor_id;
    if (anchor_id >= 0 && anchor_id != fhp_f->anchor.index())
      throw std::invalid_argument("fhp factor anchor does not match the landmark's anchor");
  }
  factors_.push_back(std::move(f));
}

// ---------------------------------------------------------------------------
// Residuals and analytic Jacobians

namespace {

// d(pixel)/d(camera-frame point) for the pinhole model.
Eigen::Matrix<double, 2, 3> pinhole_jacobian(const CameraIntrinsics& K, const Vec3& q) {
  Eigen::Matrix<double, 2, 3> j;
  const double iz = 1.0 / q.z();
  j << K.fx * iz, 0, -K.fx * q.x() * iz * iz,
       0, K.fy * iz, -K.fy * q.y() * iz * iz;
  return j;
}

// Derivatives of the unit-depth structural point s_j w.r.t. w_bar and f.
void unit_point_shape_derivatives(const FspRect& l, int offset, Vec3& ds_dwbar, Vec3& ds_df) {
  const double inv_f = 1.0 / l.form_factor;
  switch (offset) {
    case 0:
      ds_dwbar = Vec3::Zero();
      ds_df = Vec3::Zero();
      break;
    case 1:
      ds_dwbar = Vec3(1, 0, 0);
      ds_df = Vec3::Zero();
      break;
    case 2:
      ds_dwbar = Vec3(1, inv_f, 0);
      ds_df = Vec3(0, -l.w_bar * inv_f * inv_f, 0);
      break;
    default:
      ds_dwbar = Vec3(0, inv_f, 0);
      ds_df = Vec3(0, -l.w_bar * inv_f * inv_f, 0);
      break;
  }
}

FactorEval evaluate_fsp(const FactorGraph& g, const FspReprojectionFactor& f,
                        bool with_jacobians) {
  FactorEval out;
  out.residual = Eigen::VectorXd::Zero(8);

  const Pose& camera = g.pose(f.camera);
  const Pose& anchor = g.pose(f.anchor);
  const FspRect& l = g.fsp(f.landmark);

  const Mat3 r_c = camera.rotation.matrix();
  const Mat3 r_f = anchor.rotation.matrix();
  const Mat3 r_fo = l.rel_orientation.matrix();
  const Vec3 ray(l.ray.x(), l.ray.y(), 1.0);
  const double inv_omega = 1.0 / l.omega;
  const auto s_unit = fsp_unit_depth_points(l);

  if (with_jacobians) {
    out.jacobians.assign(3, Eigen::MatrixXd::Zero(8, 6));
    out.jacobians[2] = Eigen::MatrixXd::Zero(8, 8);
  }

  for (int j = 0; j < 4; ++j) {
    const Vec3 m = inv_omega * (ray + r_fo * s_unit[j]);
    const Vec3 p_world = anchor.translation + r_f * m;
    const Vec3 q = r_c.transpose() * (p_world - camera.translation);
    if (q.z() <= kDepthEpsilon) {
      out.valid = false;
      out.residual.setZero();
      for (auto& jac : out.jacobians) jac.setZero();
      return out;
    }
    out.residual(2 * j) = f.measured[j].u - (f.intrinsics.fx * q.x() / q.z() + f.intrinsics.cx);
    out.residual(2 * j + 1) =
        f.measured[j].v - (f.intrinsics.fy * q.y() / q.z() + f.intrinsics.cy);

    if (!with_jacobians) continue;

    const Eigen::Matrix<double, 2, 3> dpi = pinhole_jacobian(f.intrinsics, q);
    const Eigen::Matrix<double, 2, 3> dpi_world = dpi * r_c.transpose();

    // Camera: translation then rotation (right perturbation).
    out.jacobians[0].block<2, 3>(2 * j, 0) = dpi_world;  // -(dpi * -R_c^T)
    out.jacobians[0].block<2, 3>(2 * j, 3) = -dpi * skew(q);

    // Anchor.
    out.jacobians[1].block<2, 3>(2 * j, 0) = -dpi_world;
    out.jacobians[1].block<2, 3>(2 * j, 3) = dpi_world * r_f * skew(m);

    // Landmark: [u_r, v_r, omega, w_bar, f, dphi_O].
    Vec3 ds_dwbar, ds_df;
    unit_point_shape_derivatives(l, j, ds_dwbar, ds_df);
    const Eigen::Matrix<double, 2, 3> dpix_anchor_frame = dpi_world * r_f;
    out.jacobians[2].block<2, 1>(2 * j, 0) = -dpix_anchor_frame * (inv_omega * Vec3::UnitX());
    out.jacobians[2].block<2, 1>(2 * j, 1) = -dpix_anchor_frame * (inv_omega * Vec3::UnitY());
    out.jacobians[2].block<2, 1>(2 * j, 2) = dpix_anchor_frame * (inv_omega * m);
    out.jacobians[2].block<2, 1>(2 * j, 3) =
        -dpix_anchor_frame * (inv_omega * (r_fo * ds_dwbar));
    out.jacobians[2].block<2, 1>(2 * j, 4) = -dpix_anchor_frame * (inv_omega * (r_fo * ds_df));
    out.jacobians[2].block<2, 3>(2 * j, 5) =
        dpix_anchor_frame * (inv_omega * r_fo * skew(s_unit[j]));
  }
  return out;
}

FactorEval evaluate_fhp(const FactorGraph& g, const FhpReprojectionFactor& f,
                        bool with_jacobians) {
  FactorEval out;
  out.residual = Eigen::VectorXd::Zero(2);

  const Pose& camera = g.pose(f.camera);
  const Pose& anchor = g.pose(f.anchor);
  const FhpPoint& p = g.fhp(f.landmark);

  const Mat3 r_c = camera.rotation.matrix();
  const Mat3 r_f = anchor.rotation.matrix();
  const Vec3 ray(p.ray.x(), p.ray.y(), 1.0);
  const double inv_omega = 1.0 / p.omega;

  const Vec3 m = inv_omega * ray;
  const Vec3 p_world = anchor.translation + r_f * m;
  const Vec3 q = r_c.transpose() * (p_world - camera.translation);

  if (with_jacobians) {
    out.jacobians.assign(2, Eigen::MatrixXd::Zero(2, 6));
    out.jacobians.push_back(Eigen::MatrixXd::Zero(2, 3));
  }

  if (q.z() <= kDepthEpsilon) {
    out.valid = false;
    return out;
  }

  out.residual(0) = f.measured.u - (f.intrinsics.fx * q.x() / q.z() + f.intrinsics.cx);
  out.residual(1) = f.measured.v - (f.intrinsics.fy * q.y() / q.z() + f.intrinsics.cy);

  if (!with_jacobians) return out;

  const Eigen::Matrix<double, 2, 3> dpi = pinhole_jacobian(f.intrinsics, q);
  const Eigen::Matrix<double, 2, 3> dpi_world = dpi * r_c.transpose();

  out.jacobians[0].block<2, 3>(0, 0) = dpi_world;
  out.jacobians[0].block<2, 3>(0, 3) = -dpi * skew(q);
  out.jacobians[1].block<2, 3>(0, 0) = -dpi_world;
  out.jacobians[1].block<2, 3>(0, 3) = dpi_world * r_f * skew(m);

  const Eigen::Matrix<double, 2, 3> dpix_anchor_frame = dpi_world * r_f;
  out.jacobians[2].col(0) = -dpix_anchor_frame * (inv_omega * Vec3::UnitX());
  out.jacobians[2].col(1) = -dpix_anchor_frame * (inv_omega * Vec3::UnitY());
  out.jacobians[2].col(2) = dpix_anchor_frame * (inv_omega * m);
  return out;
}

FactorEval evaluate_imu(const FactorGraph& g, const ImuTernaryFactor& f,
                        bool with_jacobians) {
  FactorEval out;
  const Pose& pa = g.pose(f.pose_a);
  const Pose& pb = g.pose(f.pose_b);
  const Pose& pc = g.pose(f.pose_c);
  const ImuBias& bias = g.bias(f.bias);

  out.residual = imu_ternary_residual(pa, pb, pc, f.pre1, f.pre2, bias, f.gravity);
  if (!with_jacobians) return out;

  const double dt1 = f.pre1.dt;
  const double dt2 = f.pre2.dt;
  const double k = dt2 / dt1;
  const Mat3 r1 = pa.rotation.matrix();
  const Mat3 r2 = pb.rotation.matrix();
  const Mat3 r3 = pc.rotation.matrix();

  const Vec3 dp1 = f.pre1.corrected_delta_p(bias);
  const Vec3 dv1 = f.pre1.corrected_delta_v(bias);
  const Vec3 dp2 = f.pre2.corrected_delta_p(bias);

  out.jacobians.assign(4, Eigen::MatrixXd::Zero(9, 6));

  // Position rows.
  out.jacobians[0].block<3, 3>(0, 0) = k * Mat3::Identity();
  out.jacobians[0].block<3, 3>(0, 3) = r1 * (dt2 * skew(dv1) - k * skew(dp1));
  out.jacobians[1].block<3, 3>(0, 0) = -(1.0 + k) * Mat3::Identity();
  out.jacobians[1].block<3, 3>(0, 3) = r2 * skew(dp2);
  out.jacobians[2].block<3, 3>(0, 0) = Mat3::Identity();
  out.jacobians[3].block<3, 3>(0, 0) =
      k * r1 * f.pre1.dp_dba - dt2 * r1 * f.pre1.dv_dba - r2 * f.pre2.dp_dba;
  out.jacobians[3].block<3, 3>(0, 3) =
      k * r1 * f.pre1.dp_dbg - dt2 * r1 * f.pre1.dv_dbg - r2 * f.pre2.dp_dbg;

  // Rotation rows for each interval: r = log(Exp(-W db) * D) with
  // D = dR^T R_i^T R_j.
  const Vec3 db_g = bias.gyro - f.pre1.bias_ref.gyro;
  {
    const Vec3 r_rot = out.residual.segment<3>(3);
    const Mat3 jr_inv = so3_right_jacobian_inverse(r_rot);
    const Mat3 d1 = f.pre1.delta_r.matrix().transpose() * r1.transpose() * r2;
    out.jacobians[0].block<3, 3>(3, 3) = -jr_inv * r2.transpose() * r1;
    out.jacobians[1].block<3, 3>(3, 3) = jr_inv;
    out.jacobians[3].block<3, 3>(3, 3) =
        -jr_inv * d1.transpose() * so3_right_jacobian(-(f.pre1.dr_dbg * db_g)) * f.pre1.dr_dbg;
  }
  {
    const Vec3 db_g2 = bias.gyro - f.pre2.bias_ref.gyro;
    const Vec3 r_rot = out.residual.tail<3>();
    const Mat3 jr_inv = so3_right_jacobian_inverse(r_rot);
    const Mat3 d2 = f.pre2.delta_r.matrix().transpose() * r2.transpose() * r3;
    out.jacobians[1].block<3, 3>(6, 3) = -jr_inv * r3.transpose() * r2;
    out.jacobians[2].block<3, 3>(6, 3) = jr_inv;
    out.jacobians[3].block<3, 3>(6, 3) =
        -jr_inv * d2.transpose() * so3_right_jacobian(-(f.pre2.dr_dbg * db_g2)) * f.pre2.dr_dbg;
  }
  return out;
}

FactorEval evaluate_bias_walk(const FactorGraph& g, const BiasWalkFactor& f,
                              bool with_jacobians) {
  FactorEval out;
  out.residual = g.bias(f.bias_b).vector() - g.bias(f.bias_a).vector();
  if (with_jacobians) {
    out.jacobians.assign(2, Eigen::MatrixXd::Identity(6, 6));
    out.jacobians[0] *= -1.0;
  }
  return out;
}

FactorEval evaluate_pose_prior(const FactorGraph& g, const PosePriorFactor& f,
                               bool with_jacobians) {
  FactorEval out;
  const Pose& p = g.pose(f.pose);
  const Vec3 r_rot = so3_log(f.mean.rotation.inverse() * p.rotation);
  out.residual = Eigen::VectorXd::Zero(6);
  out.residual.head<3>() = p.translation - f.mean.translation;
  out.residual.tail<3>() = r_rot;
  if (with_jacobians) {
    out.jacobians.assign(1, Eigen::MatrixXd::Zero(6, 6));
    out.jacobians[0].block<3, 3>(0, 0) = Mat3::Identity();
    out.jacobians[0].block<3, 3>(3, 3) = so3_right_jacobian_inverse(r_rot);
  }
  return out;
}

}  // namespace

FactorEval evaluate_factor(const FactorGraph& graph, const Factor& f, bool with_jacobians) {
  return std::visit(
      [&](const auto& factor) -> FactorEval {
        using T = std::decay_t<decltype(factor)>;
        if constexpr (std::is_same_v<T, FspReprojectionFactor>) {
          return evaluate_fsp(graph, factor, with_jacobians);
        } else if constexpr (std::is_same_v<T, FhpReprojectionFactor>) {
          return evaluate_fhp(graph, factor, with_jacobians);
        } else if constexpr (std::is_same_v<T, ImuTernaryFactor>) {
          return evaluate_imu(graph, factor, with_jacobians);
        } else if constexpr (std::is_same_v<T, BiasWalkFactor>) {
          return evaluate_bias_walk(graph, factor, with_jacobians);
        } else {
          return evaluate_pose_prior(graph, factor, with_jacobians);
        }
      },
      f);
}

// ---------------------------------------------------------------------------
// Optimization

double FactorGraph::weighted_squared_residual() const {
  double cost = 0;
  for (const Factor& f : factors_) {
    const FactorEval e = evaluate_factor(*this, f, false);
    if (!e.valid) continue;
    const Eigen::MatrixXd info = factor_information_dyn(f);
    cost += e.residual.dot(info * e.residual);
  }
  return cost;
}

Eigen::MatrixXd FactorGraph::dense_hessian() const {
  std::vector<int> offsets(values_.size(), -1);
  int free_dim = 0;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (fixed_[i]) continue;
    offsets[i] = free_dim;
    free_dim += manifold_dim(kinds_[i]);
  }
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(free_dim, free_dim);
  for (const Factor& f : factors_) {
    const FactorEval e = evaluate_factor(*this, f, true);
    if (!e.valid) continue;
    const Eigen::MatrixXd info = factor_information_dyn(f);
    const auto vars = factor_variables(f);
    for (std::size_t i = 0; i < vars.size(); ++i) {
      if (offsets[vars[i].index()] < 0) continue;
      const Eigen::MatrixXd wi = e.jacobians[i].transpose() * info;
      for (std::size_t j = 0; j < vars.size(); ++j) {
        if (offsets[vars[j].index()] < 0) continue;
        h.block(offsets[vars[i].index()], offsets[vars[j].index()],
                e.jacobians[i].cols(), e.jacobians[j].cols()) += wi * e.jacobians[j];
      }
    }
  }
  return h;
}

OptimizeReport FactorGraph::optimize(const OptimizerConfig& config) {
  OptimizeReport report;
  report.initial_cost = weighted_squared_residual();
  report.final_cost = report.initial_cost;

  if (factors_.empty()) {
    report.reason = StopReason::NoFactors;
    return report;
  }

  std::vector<int> offsets(values_.size(), -1);
  std::vector<std::size_t> free_vars;
  int free_dim = 0;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (fixed_[i]) continue;
    offsets[i] = free_dim;
    free_dim += manifold_dim(kinds_[i]);
    free_vars.push_back(i);
  }
  if (free_dim == 0) {
    report.reason = StopReason::NoFreeVariables;
    return report;
  }

  double cost = report.initial_cost;
  report.reason = StopReason::MaxIterations;

  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;

  for (int iter = 1; iter <= config.max_iterations; ++iter) {
    triplets.clear();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(free_dim);
    bool any_valid = false;

    for (const Factor& f : factors_) {
      const FactorEval e = evaluate_factor(*this, f, true);
      if (!e.valid) {
        ++report.skipped_evaluations;
        continue;
      }
      any_valid = true;
      const Eigen::MatrixXd info = factor_information_dyn(f);
      const auto vars = factor_variables(f);
      for (std::size_t i = 0; i < vars.size(); ++i) {
        const int oi = offsets[vars[i].index()];
        if (oi < 0) continue;
        const Eigen::MatrixXd wi = e.jacobians[i].transpose() * info;
        rhs.segment(oi, wi.rows()) -= wi * e.residual;
        for (std::size_t j = 0; j < vars.size(); ++j) {
          const int oj = offsets[vars[j].index()];
          if (oj < 0) continue;
          const Eigen::MatrixXd block = wi * e.jacobians[j];
          for (int r = 0; r < block.rows(); ++r)
            for (int c = 0; c < block.cols(); ++c)
              triplets.emplace_back(oi + r, oj + c, block(r, c));
        }
      }
    }

    if (!any_valid) {
      report.reason = StopReason::RelativeDecrease;
      break;
    }

    Eigen::SparseMatrix<double> h(free_dim, free_dim);
    h.setFromTriplets(triplets.begin(), triplets.end());

    // Coordinates no factor informs (e.g. the inverse depth of a landmark
    // seen only from its anchor frame, which the projection provably does
    // not depend on) get a unit pivot and a zero right-hand side: they hold
    // their current value until observations arrive.
    {
      Eigen::VectorXd diag = h.diagonal();
      int held = 0;
      for (int i = 0; i < free_dim; ++i) {
        if (diag(i) <= 1e-12) {
          h.coeffRef(i, i) += 1.0;
          rhs(i) = 0.0;
          ++held;
        }
      }
      report.unconstrained_dimensions = std::max(report.unconstrained_dimensions, held);
    }

    solver.compute(h);
    if (solver.info() != Eigen::Success) throw SingularHessian();
    const Eigen::VectorXd delta = solver.solve(rhs);
    if (!delta.allFinite() || delta.lpNorm<Eigen::Infinity>() > 1e13)
      throw SingularHessian();

    // Step halving on domain violation or cost increase.
    const std::vector<Value> saved = values_;
    double alpha = 1.0;
    bool accepted = false;
    double new_cost = cost;
    for (int attempt = 0; attempt <= config.max_step_halvings; ++attempt) {
      values_ = saved;
      for (std::size_t vi : free_vars) {
        const int dim = manifold_dim(kinds_[vi]);
        retract_variable(VariableId(static_cast<std::int32_t>(vi), kinds_[vi]),
                         alpha * delta.segment(offsets[vi], dim));
      }
      bool in_domain = true;
      for (std::size_t vi : free_vars) {
        if (!variable_in_domain(VariableId(static_cast<std::int32_t>(vi), kinds_[vi]))) {
          in_domain = false;
          break;
        }
      }
      if (in_domain) {
        new_cost = weighted_squared_residual();
        if (new_cost <= cost) {
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      values_ = saved;
      report.reason = StopReason::StepRejected;
      break;
    }

    report.iterations = iter;
    report.cost_trace.push_back(new_cost);
    const double decrease = cost - new_cost;
    cost = new_cost;

    if (alpha * delta.lpNorm<Eigen::Infinity>() < config.step_tolerance) {
      report.reason = StopReason::StepTolerance;
      break;
    }
    if (decrease <= config.relative_decrease_tolerance * std::max(cost, 1e-300)) {
      report.reason = StopReason::RelativeDecrease;
      break;
    }
  }

  report.final_cost = cost;
  for (const Factor& f : factors_) {
    if (!evaluate_factor(*this, f, false).valid) ++report.invalid_at_convergence;
  }
  return report;
}

}  // namespace fsp
