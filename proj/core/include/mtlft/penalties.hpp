#pragma once

// Closed-form penalties that characterize which interpolant gradient descent
// selects in diagonal linear and shallow ReLU networks, together with their
// scaling elasticities and a generic minimum-penalty interpolation solver.
//
// The two-layer diagonal / ReLU parameterizations both admit an exact
// reduction of the implicit minimum-parameter-norm problem to a penalty on
// function-space coefficients:
//   - joint two-task training  ->  a group lasso across tasks,
//   - sequential training      ->  a scale-adapted penalty built from
//     q(z) = 2 - sqrt(4 + z^2) + z*arcsinh(z/2)   (diagonal nets), or from a
//     per-unit variational form whose stationarity condition is a quartic
//     with vanishing u^2 coefficient (ReLU nets).

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mtlft/errors.hpp"

namespace mtlft::penalties {

enum class PenaltyId { group_lasso, q_norm, relu_ft, l1, l2 };

const char* to_string(PenaltyId id);
PenaltyId penalty_id_from_string(const std::string& name);

// 2 * sum_d sqrt(beta_aux_d^2 + beta_main_d^2). Both vectors length D.
double group_lasso(const Eigen::VectorXd& beta_aux, const Eigen::VectorXd& beta_main);

// q(z) = 2 - sqrt(4 + z^2) + z*arcsinh(z/2). Even, convex, q(0) = 0,
// q(z) ~ z^2/4 near zero and ~ |z| log|z| for large |z|.
double q_function(double z);

// sum_d a_d * q(2*beta_main_d / a_d) with a_d = |beta_aux_d| + gamma^2.
// a_d == 0 with beta_main_d != 0 raises SingularScaleError (the penalty
// diverges); a_d == 0 with beta_main_d == 0 contributes zero.
double q_norm(const Eigen::VectorXd& beta_main, const Eigen::VectorXd& beta_aux,
              double gamma);

// 2 * sum_h ||m_col_h||_2 for the per-unit magnitude matrix m (outputs x H).
double mtl_relu_penalty(const Eigen::MatrixXd& m);

// One feature/unit of a two-task problem, as seen by the scalar penalties:
//   m_main  main-task magnitude (diagonal: beta_d; ReLU: v_h*||w_h||),
//   m_aux   auxiliary magnitude (diagonal: |beta_d^aux|; ReLU: ||w_h^aux||),
//   rho     cosine between main and auxiliary unit directions (ReLU only),
//   gamma   readout scale at the start of finetuning.
struct PenaltyPoint {
  double m_main = 0.0;
  double m_aux = 0.0;
  double rho = 1.0;
  double gamma = 0.0;
};

struct QuarticSolveReport {
  // Monic coefficients {1, c3, c2, c1, c0} of u^4 + c3 u^3 + c2 u^2 + c1 u + c0.
  std::array<double, 5> coefficients{};
  std::vector<double> positive_real_roots;  // ascending, each > 1e-12
  double u_star = 0.0;
  // For relu_ft_penalty reports this is the penalty value at u_star; for bare
  // quartic solves it is the polynomial residual at u_star (near zero).
  double objective_at_root = 0.0;
  bool multiple_roots = false;
  bool boundary = false;  // infimum attained at u -> 0+, not at a root
};

// Real roots u > 1e-12 of u^4 + c3 u^3 + c1 u + c0 (the u^2 coefficient is
// identically zero for this family). Companion-matrix eigenvalues polished by
// Newton steps; every returned root satisfies |p(u)| < 1e-10 * max(1, u^4).
QuarticSolveReport solve_quartic_positive_roots(double c3, double c1, double c0);

// r = min_{u>0} (m/u - gamma)^2 + u^2 + m_aux^2 - 2*u*m_aux*rho,
// the per-unit finetuning penalty of a ReLU net pretrained to a unit of
// magnitude m_aux at direction cosine rho. Stationary points solve
// u^4 - m_aux*rho*u^3 + gamma*m*u - m^2 = 0; with several positive roots the
// minimum over all of them is returned and multiple_roots is set. For m == 0
// and m_aux*rho <= 0 the infimum sits at u -> 0+ (boundary flag) with value
// gamma^2 + m_aux^2.
QuarticSolveReport relu_ft_penalty(const PenaltyPoint& pt);

enum class ElasticityMethod { analytic, finite_difference };

// How the auxiliary-scale derivative is taken. squared_magnitude scales the
// variable the sequential-training analysis is written in (the squared hidden
// magnitude, with gamma co-scaled as its square root); under it the
// order/dependence conservation law is exact. magnitude differentiates with
// respect to the physical m_aux at fixed gamma, which doubles the ReLU value
// at gamma = 0.
enum class FdConvention { squared_magnitude, magnitude };

struct ElasticityResult {
  double ell_order = 0.0;           // d log P / d log m_main
  double feature_dependence = 0.0;  // d log P / d log (aux scale)
  ElasticityMethod method = ElasticityMethod::analytic;
  FdConvention fd_convention = FdConvention::squared_magnitude;
  // Recomputed on demand; ell_order + feature_dependence - 1 vanishes under
  // squared_magnitude for every penalty in scope.
  double conservation_residual() const { return ell_order + feature_dependence - 1.0; }
};

// Scalar penalty the elasticities refer to: the marginal cost of the main
// task feature given the auxiliary state.
//   group_lasso: sqrt(m_aux^2 + m_main^2) - m_aux   (baseline at m_main = 0)
//   q_norm:      (m_aux + gamma^2) * q(2*m_main / (m_aux + gamma^2))
//   relu_ft:     r from relu_ft_penalty
double marginal_penalty(PenaltyId id, const PenaltyPoint& pt);

// Order and feature-dependence elasticities of marginal_penalty at pt.
// Requires an interior point: m_main != 0 and m_aux > 0, and a positive
// penalty value (log derivatives). l1/l2 have no two-task structure and are
// rejected.
ElasticityResult elasticities(PenaltyId id, const PenaltyPoint& pt,
                              ElasticityMethod method = ElasticityMethod::analytic,
                              FdConvention conv = FdConvention::squared_magnitude);

struct TaskConstraint {
  Eigen::MatrixXd X;  // n x D, full row rank
  Eigen::VectorXd y;  // n
};

// min penalty(beta) subject to exact interpolation.
//   l1, l2, q_norm: one constraint block (main); group_lasso: aux and main
//   blocks, penalized jointly per coordinate.
// For q_norm the scales are a_d = |aux_coefficients_d| + gamma^2.
struct InterpolationProblem {
  TaskConstraint main;
  std::optional<TaskConstraint> aux;
  PenaltyId penalty = PenaltyId::l2;
  Eigen::VectorXd aux_coefficients;
  double gamma = 0.0;
};

struct InterpolantResult {
  Eigen::VectorXd beta_main;
  Eigen::VectorXd beta_aux;  // empty unless penalty == group_lasso
  double penalty_value = 0.0;
  long iterations = 0;
  double constraint_residual = 0.0;  // ||X beta - y||_inf over all blocks
};

InterpolantResult min_penalty_interpolant(const InterpolationProblem& problem);

}  // namespace mtlft::penalties
