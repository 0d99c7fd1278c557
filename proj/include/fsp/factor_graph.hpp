#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "fsp/geometry.hpp"
#include "fsp/imu.hpp"
#include "fsp/parameterization.hpp"

namespace fsp {

struct UnknownVariable : std::runtime_error {
  UnknownVariable() : std::runtime_error("variable id does not belong to this graph") {}
};

struct SingularHessian : std::runtime_error {
  SingularHessian() : std::runtime_error("normal equations are rank deficient") {}
};

enum class VarKind { Pose, Fsp, Fhp, Bias };

/// Manifold dimension of each variable kind: Pose 6, Fsp 8, Fhp 3, Bias 6.
int manifold_dim(VarKind kind);

class VariableId {
 public:
  VariableId() = default;

  bool valid() const { return index_ >= 0; }
  VarKind kind() const { return kind_; }
  std::int32_t index() const { return index_; }

  friend bool operator==(const VariableId&, const VariableId&) = default;
  friend bool operator<(const VariableId& a, const VariableId& b) {
    return a.index_ < b.index_;
  }

 private:
  friend class FactorGraph;
  VariableId(std::int32_t index, VarKind kind) : index_(index), kind_(kind) {}

  std::int32_t index_ = -1;
  VarKind kind_ = VarKind::Pose;
};

// ---------------------------------------------------------------------------
// Factors

/// Reprojection of all four rectangle corners, stacked (u1,v1,...,u4,v4).
/// Connects the observing camera pose, the anchor pose and the landmark; the
/// camera and anchor may be the same variable (first-observation frame).
struct FspReprojectionFactor {
  VariableId camera;
  VariableId anchor;
  VariableId landmark;
  CameraIntrinsics intrinsics;
  std::array<Pixel, 4> measured;
  Mat8 information = Mat8::Identity();
};

struct FhpReprojectionFactor {
  VariableId camera;
  VariableId anchor;
  VariableId landmark;
  CameraIntrinsics intrinsics;
  Pixel measured;
  Mat2 information = Mat2::Identity();
};

/// Inertial constraint among three successive poses plus the bias node of the
/// span. Residual order matches imu_ternary_residual.
struct ImuTernaryFactor {
  VariableId pose_a;
  VariableId pose_b;
  VariableId pose_c;
  VariableId bias;
  Preintegrated pre1;  // interval [a, b]
  Preintegrated pre2;  // interval [b, c]
  Vec3 gravity = Vec3(0, 0, -9.81);
  Mat9 information = Mat9::Identity();
};

/// Random-walk coupling between consecutive bias nodes: r = bias_b - bias_a.
struct BiasWalkFactor {
  VariableId bias_a;
  VariableId bias_b;
  Mat6 information = Mat6::Identity();
};

/// Unary pose prior: r = [t - t0, log(R0^T R)].
struct PosePriorFactor {
  VariableId pose;
  Pose mean;
  Mat6 information = Mat6::Identity();
};

using Factor = std::variant<FspReprojectionFactor, FhpReprojectionFactor, ImuTernaryFactor,
                            BiasWalkFactor, PosePriorFactor>;

std::vector<VariableId> factor_variables(const Factor& f);
int factor_residual_dim(const Factor& f);

/// Residual and per-variable Jacobian blocks at the graph's current values.
/// valid == false flags a behind-camera prediction; such factors contribute
/// nothing to the current iteration.
struct FactorEval {
  bool valid = true;
  Eigen::VectorXd residual;
  std::vector<Eigen::MatrixXd> jacobians;  // ordered as factor_variables()
};

// ---------------------------------------------------------------------------
// Optimizer

struct OptimizerConfig {
  int max_iterations = 50;
  double step_tolerance = 1e-8;              // on ||delta||_inf
  double relative_decrease_tolerance = 1e-9;
  int max_step_halvings = 10;
};

enum class StopReason {
  NoFactors,
  NoFreeVariables,
  StepTolerance,
  RelativeDecrease,
  StepRejected,
  MaxIterations,
};

std::string to_string(StopReason reason);

struct OptimizeReport {
  int iterations = 0;
  double initial_cost = 0;  // weighted squared residual before the first step
  double final_cost = 0;
  StopReason reason = StopReason::NoFactors;
  std::vector<double> cost_trace;  // accepted cost after each iteration
  int skipped_evaluations = 0;     // behind-camera factor evaluations
  int invalid_at_convergence = 0;  // factors still behind-camera at the end
  int unconstrained_dimensions = 0;  // coordinates held for lack of information

  bool converged() const {
    return reason != StopReason::MaxIterations && reason != StopReason::StepRejected;
  }
};

// ---------------------------------------------------------------------------

class FactorGraph {
 public:
  VariableId add_pose_variable(const Pose& value);
  VariableId add_fsp_variable(const FspRect& value);
  VariableId add_fhp_variable(const FhpPoint& value);
  VariableId add_bias_variable(const ImuBias& value);

  void fix_variable(VariableId id);
  bool is_fixed(VariableId id) const;

  const Pose& pose(VariableId id) const;
  const FspRect& fsp(VariableId id) const;
  const FhpPoint& fhp(VariableId id) const;
  const ImuBias& bias(VariableId id) const;
  void set_pose(VariableId id, const Pose& value);
  void set_fsp(VariableId id, const FspRect& value);
  void set_fhp(VariableId id, const FhpPoint& value);
  void set_bias(VariableId id, const ImuBias& value);

  /// Boxplus on one variable; delta size must equal the kind's manifold dim.
  void retract_variable(VariableId id, const Eigen::VectorXd& delta);

  /// Positivity of omega / w_bar / form_factor for landmark kinds.
  bool variable_in_domain(VariableId id) const;

  void add_factor(Factor f);
  const std::vector<Factor>& factors() const { return factors_; }

  std::size_t variable_count() const { return values_.size(); }
  int dimension() const;
  int dimension_of_kind(VarKind kind) const;
  int free_dimension() const;

  /// Total weighted squared residual at the current values. Behind-camera
  /// factors contribute zero.
  double weighted_squared_residual() const;

  /// Gauss-Newton with sparse Cholesky on the full normal equations and a
  /// step-halving safeguard instead of Levenberg-Marquardt damping: a step is
  /// halved (up to config.max_step_halvings times) whenever it would push a
  /// landmark scalar out of its positive domain or increase the cost.
  OptimizeReport optimize(const OptimizerConfig& config = {});

  /// Dense Hessian of the free variables; intended for small diagnostic
  /// problems (gauge analysis), not for solving.
  Eigen::MatrixXd dense_hessian() const;

 private:
  using Value = std::variant<Pose, FspRect, FhpPoint, ImuBias>;

  const Value& checked(VariableId id, VarKind kind) const;

  std::vector<Value> values_;
  std::vector<VarKind> kinds_;
  std::vector<bool> fixed_;
  std::vector<Factor> factors_;
};

FactorEval evaluate_factor(const FactorGraph& graph, const Factor& f, bool with_jacobians);

}  // namespace fsp
