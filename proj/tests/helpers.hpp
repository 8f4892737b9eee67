#pragma once

// Independent numeric oracles used by the tests. These deliberately avoid the
// code paths under test: the 1-D minimizer brackets on a log grid and refines
// by golden section (no quartic solve), and the interpolation oracle is a
// plain projected subgradient method.

#include <cmath>
#include <functional>
#include <random>

#include <Eigen/Dense>

namespace testing_oracles {

struct GoldenResult {
  double u;
  double value;
};

// Minimize f over (0, inf) by probing a log-spaced grid and refining the best
// bracket with golden-section search.
inline GoldenResult golden_minimize(const std::function<double(double)>& f,
                                    double lo = 1e-8, double hi = 1e6,
                                    int grid = 2400) {
  const double log_lo = std::log(lo), log_hi = std::log(hi);
  int best = 0;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> us(grid), vals(grid);
  for (int i = 0; i < grid; ++i) {
    us[i] = std::exp(log_lo + (log_hi - log_lo) * i / (grid - 1));
    vals[i] = f(us[i]);
    if (vals[i] < best_val) {
      best_val = vals[i];
      best = i;
    }
  }
  double a = us[std::max(0, best - 1)];
  double b = us[std::min(grid - 1, best + 1)];

  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 300 && (b - a) > 1e-13 * std::max(1.0, std::abs(b)); ++it) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = f(x2);
    }
  }
  const double u = 0.5 * (a + b);
  return {u, f(u)};
}

inline double relu_p(double u, double m, double gamma, double maux, double rho) {
  const double t = m / u - gamma;
  return t * t + u * u + maux * maux - 2.0 * u * maux * rho;
}

inline GoldenResult golden_relu_ft(double m, double gamma, double maux, double rho) {
  return golden_minimize([&](double u) { return relu_p(u, m, gamma, maux, rho); });
}

// Projected subgradient descent for min penalty(x) s.t. x in affine set.
// Slow but simple; used as an algorithmically independent cross-check of the
// production interpolation solver.
inline Eigen::VectorXd projected_subgradient(
    const std::function<void(Eigen::VectorXd&)>& project,
    const std::function<double(const Eigen::VectorXd&)>& penalty,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& subgrad,
    Eigen::VectorXd x, long iters) {
  project(x);
  Eigen::VectorXd best = x;
  double best_val = penalty(x);
  const double r0 = std::max(1.0, x.norm());
  for (long t = 0; t < iters; ++t) {
    Eigen::VectorXd g = subgrad(x);
    const double gn = g.norm();
    if (gn == 0.0) break;
    x -= (r0 / (gn * std::sqrt(double(t) + 1.0))) * g;
    project(x);
    const double val = penalty(x);
    if (val < best_val) {
      best_val = val;
      best = x;
    }
  }
  return best;
}

inline std::mt19937_64 rng(uint64_t seed) { return std::mt19937_64(seed); }

inline double log_uniform(std::mt19937_64& g, double lo, double hi) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(g));
}

}  // namespace testing_oracles
