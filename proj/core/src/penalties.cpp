#include "mtlft/penalties.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

namespace mtlft::penalties {

namespace {

constexpr double kRootFloor = 1e-12;   // smallest admissible positive root
constexpr double kFdLogStep = 1e-6;    // central-difference step in log space

double sq(double x) { return x * x; }

}  // namespace

const char* to_string(PenaltyId id) {
  switch (id) {
    case PenaltyId::group_lasso: return "group_lasso";
    case PenaltyId::q_norm: return "q_norm";
    case PenaltyId::relu_ft: return "relu_ft";
    case PenaltyId::l1: return "l1";
    case PenaltyId::l2: return "l2";
  }
  throw DomainError("unknown penalty id");
}

PenaltyId penalty_id_from_string(const std::string& name) {
  if (name == "group_lasso") return PenaltyId::group_lasso;
  if (name == "q_norm") return PenaltyId::q_norm;
  if (name == "relu_ft") return PenaltyId::relu_ft;
  if (name == "l1") return PenaltyId::l1;
  if (name == "l2") return PenaltyId::l2;
  throw DomainError("unknown penalty id: " + name);
}

double group_lasso(const Eigen::VectorXd& beta_aux, const Eigen::VectorXd& beta_main) {
  if (beta_aux.size() != beta_main.size())
    throw DimensionError("group_lasso: coefficient vectors differ in length");
  double acc = 0.0;
  for (Eigen::Index d = 0; d < beta_aux.size(); ++d)
    acc += std::hypot(beta_aux[d], beta_main[d]);
  return 2.0 * acc;
}

double q_function(double z) {
  const double z2 = z * z;
  if (std::abs(z) < 5e-2) {
    // 2 - sqrt(4+z^2) cancels for small z; the Taylor series keeps full
    // precision there (truncation below 1e-15 relative at the switch point).
    return z2 * (0.25 + z2 * (-1.0 / 192.0 +
                              z2 * (1.0 / 2560.0 + z2 * (-5.0 / 114688.0))));
  }
  // hypot avoids overflow of z^2 and std::asinh is stable for all arguments.
  return 2.0 - std::hypot(2.0, z) + z * std::asinh(0.5 * z);
}

double q_norm(const Eigen::VectorXd& beta_main, const Eigen::VectorXd& beta_aux,
              double gamma) {
  if (beta_aux.size() != beta_main.size())
    throw DimensionError("q_norm: coefficient vectors differ in length");
  const double g2 = gamma * gamma;
  double acc = 0.0;
  for (Eigen::Index d = 0; d < beta_main.size(); ++d) {
    const double a = std::abs(beta_aux[d]) + g2;
    if (a == 0.0) {
      if (beta_main[d] != 0.0)
        throw SingularScaleError("q_norm: zero scale at coordinate " + std::to_string(d) +
                                 " with nonzero coefficient");
      continue;
    }
    acc += a * q_function(2.0 * beta_main[d] / a);
  }
  return acc;
}

double mtl_relu_penalty(const Eigen::MatrixXd& m) {
  return 2.0 * m.colwise().norm().sum();
}

namespace {

double quartic_value(const std::array<double, 5>& c, double u) {
  return (((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4];
}

double quartic_derivative(const std::array<double, 5>& c, double u) {
  return ((4.0 * c[0] * u + 3.0 * c[1]) * u + 2.0 * c[2]) * u + c[3];
}

}  // namespace

QuarticSolveReport solve_quartic_positive_roots(double c3, double c1, double c0) {
  QuarticSolveReport rep;
  rep.coefficients = {1.0, c3, 0.0, c1, c0};

  // Magnitude of the polynomial's terms at u; the natural backward-error
  // scale for residual checks.
  auto term_scale = [&](double u) {
    return ((std::abs(u) + std::abs(c3)) * u * u + std::abs(c1)) * std::abs(u) +
           std::abs(c0);
  };

  // Scale u = s*t so the companion matrix holds O(1) entries.
  double s = std::max({1.0, std::abs(c3), std::cbrt(std::abs(c1)),
                       std::sqrt(std::sqrt(std::abs(c0)))});
  const double d3 = c3 / s;
  const double d1 = c1 / (s * s * s);
  const double d0 = c0 / (s * s * s * s);

  Eigen::Matrix4d companion = Eigen::Matrix4d::Zero();
  companion(1, 0) = companion(2, 1) = companion(3, 2) = 1.0;
  companion(0, 3) = -d0;
  companion(1, 3) = -d1;
  companion(2, 3) = 0.0;
  companion(3, 3) = -d3;
  Eigen::EigenSolver<Eigen::Matrix4d> eig(companion, /*computeEigenvectors=*/false);

  std::vector<double> roots;
  for (int i = 0; i < 4; ++i) {
    const std::complex<double> lambda = eig.eigenvalues()[i];
    const double re = lambda.real() * s;
    if (re <= kRootFloor) continue;
    // Near-double real roots can surface as a complex pair just off the axis;
    // keep such candidates and let the polish + residual check decide.
    if (std::abs(lambda.imag()) * s > 1e-5 * std::max(1.0, std::abs(re))) continue;
    // Newton polish to a relative fixpoint. Spurious candidates produced by a
    // defective zero eigenvalue slide toward 0 and drop below the root floor.
    double u = re;
    for (int it = 0; it < 60 && u > kRootFloor; ++it) {
      const double p = quartic_value(rep.coefficients, u);
      const double dp = quartic_derivative(rep.coefficients, u);
      if (p == 0.0 || dp == 0.0) break;
      const double step = p / dp;
      const double next = u - step;
      if (!(next > 0.0) || !std::isfinite(next)) break;
      u = next;
      if (std::abs(step) <= 4.0 * std::numeric_limits<double>::epsilon() * u) break;
    }
    if (u <= kRootFloor) continue;
    if (std::abs(quartic_value(rep.coefficients, u)) >= 1e-12 * term_scale(u))
      continue;
    roots.push_back(u);
  }

  std::sort(roots.begin(), roots.end());
  for (double u : roots) {
    if (rep.positive_real_roots.empty() ||
        u - rep.positive_real_roots.back() > 1e-7 * std::max(1.0, u))
      rep.positive_real_roots.push_back(u);
  }
  if (rep.positive_real_roots.empty())
    throw RootNotFoundError("solve_quartic_positive_roots: no positive real root");

  rep.multiple_roots = rep.positive_real_roots.size() > 1;
  rep.u_star = rep.positive_real_roots.front();
  rep.objective_at_root = quartic_value(rep.coefficients, rep.u_star);
  return rep;
}

namespace {

double relu_ft_objective(const PenaltyPoint& pt, double u) {
  return sq(pt.m_main / u - pt.gamma) + u * u + sq(pt.m_aux) -
         2.0 * u * pt.m_aux * pt.rho;
}

void validate_point(const PenaltyPoint& pt) {
  if (!(pt.m_aux >= 0.0)) throw DomainError("penalty point: m_aux must be >= 0");
  if (!(std::abs(pt.rho) <= 1.0)) throw DomainError("penalty point: |rho| must be <= 1");
  if (!(pt.gamma >= 0.0)) throw DomainError("penalty point: gamma must be >= 0");
}

}  // namespace

QuarticSolveReport relu_ft_penalty(const PenaltyPoint& pt) {
  validate_point(pt);
  const double drive = pt.m_aux * pt.rho;

  if (pt.m_main == 0.0) {
    QuarticSolveReport rep;
    rep.coefficients = {1.0, -drive, 0.0, 0.0, 0.0};
    if (drive > 0.0) {
      rep.positive_real_roots = {drive};
      rep.u_star = drive;
      rep.objective_at_root = relu_ft_objective(pt, drive);
    } else {
      rep.boundary = true;
      rep.u_star = 0.0;
      rep.objective_at_root = sq(pt.gamma) + sq(pt.m_aux);
    }
    return rep;
  }

  QuarticSolveReport rep = solve_quartic_positive_roots(
      -drive, pt.gamma * pt.m_main, -sq(pt.m_main));
  double best_u = rep.positive_real_roots.front();
  double best_val = relu_ft_objective(pt, best_u);
  for (size_t i = 1; i < rep.positive_real_roots.size(); ++i) {
    const double val = relu_ft_objective(pt, rep.positive_real_roots[i]);
    if (val < best_val) {
      best_val = val;
      best_u = rep.positive_real_roots[i];
    }
  }
  rep.u_star = best_u;
  rep.objective_at_root = best_val;
  return rep;
}

double marginal_penalty(PenaltyId id, const PenaltyPoint& pt) {
  validate_point(pt);
  switch (id) {
    case PenaltyId::group_lasso: {
      // sqrt(s^2 + m^2) - s written cancellation-free.
      const double h = std::hypot(pt.m_aux, pt.m_main);
      return sq(pt.m_main) / (h + pt.m_aux);
    }
    case PenaltyId::q_norm: {
      const double a = pt.m_aux + sq(pt.gamma);
      if (a == 0.0) {
        if (pt.m_main != 0.0)
          throw SingularScaleError("marginal_penalty: q_norm scale is zero");
        return 0.0;
      }
      return a * q_function(2.0 * pt.m_main / a);
    }
    case PenaltyId::relu_ft:
      return relu_ft_penalty(pt).objective_at_root;
    default:
      throw DomainError("marginal_penalty: penalty has no two-task point form");
  }
}

namespace {

ElasticityResult analytic_elasticities(PenaltyId id, const PenaltyPoint& pt,
                                       FdConvention conv) {
  ElasticityResult res;
  res.method = ElasticityMethod::analytic;
  res.fd_convention = conv;
  switch (id) {
    case PenaltyId::group_lasso: {
      const double h = std::hypot(pt.m_aux, pt.m_main);
      const double p = sq(pt.m_main) / (h + pt.m_aux);
      res.ell_order = sq(pt.m_main) / (h * p);
      res.feature_dependence = -pt.m_aux / h;
      break;
    }
    case PenaltyId::q_norm: {
      const double a = pt.m_aux + sq(pt.gamma);
      const double z = 2.0 * pt.m_main / a;
      const double za = z * std::asinh(0.5 * z);
      const double qz = q_function(z);
      res.ell_order = za / qz;
      res.feature_dependence = (qz - za) / qz;
      if (conv == FdConvention::magnitude)
        res.feature_dependence *= pt.m_aux / a;
      break;
    }
    case PenaltyId::relu_ft: {
      const QuarticSolveReport rep = relu_ft_penalty(pt);
      const double r = rep.objective_at_root;
      if (!(r > 0.0))
        throw DomainError("elasticities: penalty vanishes at this point");
      const double u = rep.u_star;
      const double slack = pt.m_main / u - pt.gamma;
      res.ell_order = 2.0 * pt.m_main * slack / (u * r);
      const double aux_part = sq(pt.m_aux) - u * pt.rho * pt.m_aux;
      if (conv == FdConvention::squared_magnitude)
        res.feature_dependence = (aux_part - pt.gamma * slack) / r;
      else
        res.feature_dependence = 2.0 * aux_part / r;
      break;
    }
    default:
      throw DomainError("elasticities: penalty has no two-task point form");
  }
  return res;
}

double log_marginal(PenaltyId id, const PenaltyPoint& pt) {
  double p;
  if (id == PenaltyId::q_norm) {
    const double a = pt.m_aux + sq(pt.gamma);
    p = a * q_function(2.0 * pt.m_main / a);
  } else {
    p = marginal_penalty(id, pt);
  }
  if (!(p > 0.0) || !std::isfinite(p))
    throw DomainError("elasticities: penalty must be positive for log derivatives");
  return std::log(p);
}

ElasticityResult fd_elasticities(PenaltyId id, const PenaltyPoint& pt,
                                 FdConvention conv) {
  ElasticityResult res;
  res.method = ElasticityMethod::finite_difference;
  res.fd_convention = conv;
  const double h = kFdLogStep;
  const double up = std::exp(h), down = std::exp(-h);

  PenaltyPoint plus = pt, minus = pt;
  plus.m_main *= up;
  minus.m_main *= down;
  res.ell_order = (log_marginal(id, plus) - log_marginal(id, minus)) / (2.0 * h);

  plus = pt;
  minus = pt;
  switch (id) {
    case PenaltyId::group_lasso:
      plus.m_aux *= up;
      minus.m_aux *= down;
      break;
    case PenaltyId::q_norm:
      if (conv == FdConvention::squared_magnitude) {
        // Scale a = m_aux + gamma^2 as a whole: gamma^2 moves with m_aux.
        const double g2 = sq(pt.gamma);
        plus.m_aux = (pt.m_aux + g2) * up;
        plus.gamma = 0.0;
        minus.m_aux = (pt.m_aux + g2) * down;
        minus.gamma = 0.0;
      } else {
        plus.m_aux *= up;
        minus.m_aux *= down;
      }
      break;
    case PenaltyId::relu_ft:
      if (conv == FdConvention::squared_magnitude) {
        // The analysed aux variable is the squared magnitude; gamma co-scales
        // with the initialization, i.e. like the unsquared magnitude.
        plus.m_aux *= std::exp(0.5 * h);
        plus.gamma *= std::exp(0.5 * h);
        minus.m_aux *= std::exp(-0.5 * h);
        minus.gamma *= std::exp(-0.5 * h);
      } else {
        plus.m_aux *= up;
        minus.m_aux *= down;
      }
      break;
    default:
      throw DomainError("elasticities: penalty has no two-task point form");
  }
  res.feature_dependence =
      (log_marginal(id, plus) - log_marginal(id, minus)) / (2.0 * h);
  return res;
}

}  // namespace

ElasticityResult elasticities(PenaltyId id, const PenaltyPoint& pt,
                              ElasticityMethod method, FdConvention conv) {
  validate_point(pt);
  if (pt.m_main == 0.0 || !(pt.m_aux > 0.0))
    throw DomainError("elasticities: point must be interior (m_main != 0, m_aux > 0)");
  if (id != PenaltyId::group_lasso && id != PenaltyId::q_norm && id != PenaltyId::relu_ft)
    throw DomainError("elasticities: penalty has no two-task point form");
  return method == ElasticityMethod::analytic ? analytic_elasticities(id, pt, conv)
                                              : fd_elasticities(id, pt, conv);
}

// ---------------------------------------------------------------------------
// Minimum-penalty interpolation via ADMM with exact proximal maps.
// ---------------------------------------------------------------------------

namespace {

struct AffineProjector {
  // Pi(v) = v - pinv(X) (X v - y); exact projection onto {X v = y}.
  Eigen::MatrixXd X;
  Eigen::MatrixXd pinv;  // D x n
  Eigen::VectorXd y;
  Eigen::VectorXd particular;  // pinv * y, the min-norm interpolant

  AffineProjector(const TaskConstraint& c, const char* label) : X(c.X), y(c.y) {
    if (X.rows() == 0 || X.cols() == 0)
      throw DimensionError(std::string("min_penalty_interpolant: empty design (") + label + ")");
    if (X.rows() != y.size())
      throw DimensionError(std::string("min_penalty_interpolant: X rows != y length (") + label + ")");
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(X);
    if (cod.rank() < X.rows())
      throw RankError(std::string("min_penalty_interpolant: design matrix is row rank deficient (") +
                      label + ")");
    pinv = cod.pseudoInverse();
    particular = pinv * y;
  }

  void project(Eigen::VectorXd& v) const { v -= pinv * (X * v - y); }
  double residual(const Eigen::VectorXd& v) const {
    return (X * v - y).cwiseAbs().maxCoeff();
  }
};

// Solves x + 2*tau*asinh(x/a) = v for x (odd, strictly increasing). Newton
// from x = v with a bisection bracket [0, |v|] as safeguard.
double q_prox_scalar(double v, double a, double tau) {
  if (v == 0.0) return 0.0;
  const double target = std::abs(v);
  double lo = 0.0, hi = target, x = target;
  for (int it = 0; it < 200; ++it) {
    const double g = x + 2.0 * tau * std::asinh(x / a) - target;
    if (std::abs(g) <= 1e-15 * std::max(1.0, target)) break;
    if (g > 0.0)
      hi = x;
    else
      lo = x;
    const double dg = 1.0 + 2.0 * tau / std::hypot(a, x);
    double next = x - g / dg;
    if (!(next > lo) || !(next < hi)) next = 0.5 * (lo + hi);
    x = next;
  }
  return std::copysign(x, v);
}

}  // namespace

InterpolantResult min_penalty_interpolant(const InterpolationProblem& problem) {
  const Eigen::Index D = problem.main.X.cols();

  if (problem.penalty == PenaltyId::l2) {
    AffineProjector main(problem.main, "main");
    InterpolantResult res;
    res.beta_main = main.particular;
    res.penalty_value = res.beta_main.norm();
    res.constraint_residual = main.residual(res.beta_main);
    return res;
  }

  const bool grouped = problem.penalty == PenaltyId::group_lasso;
  if (grouped && !problem.aux.has_value())
    throw DimensionError("min_penalty_interpolant: group_lasso needs an aux constraint block");
  if (grouped && problem.aux->X.cols() != D)
    throw DimensionError("min_penalty_interpolant: aux and main blocks differ in width");

  Eigen::VectorXd scales;
  if (problem.penalty == PenaltyId::q_norm) {
    if (problem.aux_coefficients.size() != D)
      throw DimensionError("min_penalty_interpolant: q_norm needs D aux coefficients");
    scales = problem.aux_coefficients.cwiseAbs().array() + sq(problem.gamma);
    if ((scales.array() <= 0.0).any())
      throw SingularScaleError("min_penalty_interpolant: q_norm scale vanishes");
  } else if (problem.penalty != PenaltyId::l1 && !grouped) {
    throw DomainError("min_penalty_interpolant: unsupported penalty");
  }

  AffineProjector main(problem.main, "main");
  std::optional<AffineProjector> aux;
  if (grouped) aux.emplace(*problem.aux, "aux");

  const Eigen::Index P = grouped ? 2 * D : D;
  auto project = [&](Eigen::VectorXd& v) {
    if (grouped) {
      Eigen::VectorXd va = v.head(D), vm = v.tail(D);
      aux->project(va);
      main.project(vm);
      v.head(D) = va;
      v.tail(D) = vm;
    } else {
      main.project(v);
    }
  };
  auto penalty_of = [&](const Eigen::VectorXd& v) -> double {
    switch (problem.penalty) {
      case PenaltyId::l1:
        return v.lpNorm<1>();
      case PenaltyId::q_norm: {
        double acc = 0.0;
        for (Eigen::Index d = 0; d < D; ++d)
          acc += scales[d] * q_function(2.0 * v[d] / scales[d]);
        return acc;
      }
      case PenaltyId::group_lasso: {
        double acc = 0.0;
        for (Eigen::Index d = 0; d < D; ++d) acc += std::hypot(v[d], v[D + d]);
        return 2.0 * acc;
      }
      default:
        return 0.0;
    }
  };
  auto prox = [&](const Eigen::VectorXd& v, double tau, Eigen::VectorXd& out) {
    switch (problem.penalty) {
      case PenaltyId::l1:
        for (Eigen::Index d = 0; d < P; ++d)
          out[d] = std::copysign(std::max(0.0, std::abs(v[d]) - tau), v[d]);
        break;
      case PenaltyId::q_norm:
        for (Eigen::Index d = 0; d < P; ++d)
          out[d] = q_prox_scalar(v[d], scales[d], tau);
        break;
      case PenaltyId::group_lasso:
        for (Eigen::Index d = 0; d < D; ++d) {
          const double norm = std::hypot(v[d], v[D + d]);
          const double scale = norm <= 2.0 * tau ? 0.0 : 1.0 - 2.0 * tau / norm;
          out[d] = scale * v[d];
          out[D + d] = scale * v[D + d];
        }
        break;
      default:
        out = v;
    }
  };

  // Consensus ADMM between the affine constraint set and the penalty.
  Eigen::VectorXd x(P);
  if (grouped) {
    x.head(D) = aux->particular;
    x.tail(D) = main.particular;
  } else {
    x = main.particular;
  }
  Eigen::VectorXd z = x, u = Eigen::VectorXd::Zero(P), z_prev(P), v(P);

  double rho = 1.0;
  const long max_iters = 500000;
  const long window = 1000;
  double window_penalty = penalty_of(x);
  long iter = 0;
  bool converged = false;

  for (iter = 1; iter <= max_iters; ++iter) {
    v = z - u;
    project(v);
    x = v;
    z_prev = z;
    prox(x + u, 1.0 / rho, z);
    u += x - z;

    if (iter % 50 == 0) {
      const double r_norm = (x - z).norm();
      const double s_norm = rho * (z - z_prev).norm();
      if (r_norm > 10.0 * s_norm) {
        rho *= 2.0;
        u *= 0.5;
      } else if (s_norm > 10.0 * r_norm) {
        rho *= 0.5;
        u *= 2.0;
      }
    }
    if (iter % window == 0) {
      const double p_now = penalty_of(x);
      const double split = (x - z).cwiseAbs().maxCoeff();
      if (split < 1e-11 * std::max(1.0, x.cwiseAbs().maxCoeff()) &&
          std::abs(window_penalty - p_now) < 1e-10) {
        converged = true;
        break;
      }
      window_penalty = p_now;
    }
  }

  project(x);  // report an exactly feasible point
  InterpolantResult res;
  if (grouped) {
    res.beta_aux = x.head(D);
    res.beta_main = x.tail(D);
  } else {
    res.beta_main = x;
  }
  res.penalty_value = penalty_of(x);
  res.iterations = iter;
  res.constraint_residual = main.residual(grouped ? Eigen::VectorXd(x.tail(D)) : x);
  if (grouped)
    res.constraint_residual =
        std::max(res.constraint_residual, aux->residual(x.head(D)));

  if (!converged)
    throw ConvergenceError("min_penalty_interpolant: iteration budget exhausted",
                           res.beta_main, res.penalty_value);
  return res;
}

}  // namespace mtlft::penalties
