#include "mtlft/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "mtlft/tasks.hpp"

namespace mtlft::analysis {

namespace {

constexpr long kLloydIterations = 300;
constexpr double kLloydTolerance = 1e-9;

// tr(X^T Y Y^T X) = ||X^T Y||_F^2 = <X X^T, Y Y^T>_F, computed on whichever
// side is cheaper to materialize.
double cross_gram_trace(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
  const Eigen::Index n = X.rows();
  if (X.cols() * Y.cols() <= n * n) return (X.transpose() * Y).squaredNorm();
  return (X * X.transpose()).cwiseProduct(Y * Y.transpose()).sum();
}

const ActivationMatrix& ensure_centered(const ActivationMatrix& X, bool auto_center,
                                        ActivationMatrix& storage) {
  if (X.centered) return X;
  if (!auto_center)
    throw ConfigError("activation matrix is not centered and auto-centering is off");
  storage = center_activations(X.data, X.source);
  return storage;
}

void require_nonzero(const ActivationMatrix& X) {
  if (X.n() < 2) throw DimensionError("need at least 2 samples per activation matrix");
  if (X.data.squaredNorm() == 0.0)
    throw DomainError("all-zero activations have no measurable dimensionality");
}

double pr_of_centered(const ActivationMatrix& X) {
  require_nonzero(X);
  const double n = static_cast<double>(X.n());
  const double tc = X.data.squaredNorm() / n;
  const double tc2 = cross_gram_trace(X.data, X.data) / (n * n);
  return tc * tc / tc2;
}

std::mt19937_64 restart_rng(std::uint64_t seed, long restart) {
  return std::mt19937_64(seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(restart + 1));
}

struct LloydResult {
  Eigen::MatrixXd centers;
  std::vector<int> assignments;
  double weighted_sse = std::numeric_limits<double>::infinity();
};

// One weighted k-means run: k-means++ seeding then Lloyd iterations. Points
// are rows of `pts`, weights positive and summing to one.
LloydResult lloyd_run(const Eigen::MatrixXd& pts, const Eigen::VectorXd& w,
                      Eigen::Index K, std::mt19937_64& rng) {
  const Eigen::Index m = pts.rows(), D = pts.cols();
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto draw_weighted = [&](const Eigen::VectorXd& mass) -> Eigen::Index {
    const double total = mass.sum();
    if (total <= 0.0) return 0;  // all remaining mass gone: duplicate point 0
    double ticket = unit(rng) * total;
    for (Eigen::Index i = 0; i < m; ++i) {
      ticket -= mass[i];
      if (ticket <= 0.0) return i;
    }
    return m - 1;
  };

  LloydResult res;
  res.centers.resize(K, D);
  res.centers.row(0) = pts.row(draw_weighted(w));
  Eigen::VectorXd d2 = (pts.rowwise() - res.centers.row(0)).rowwise().squaredNorm();
  for (Eigen::Index k = 1; k < K; ++k) {
    res.centers.row(k) = pts.row(draw_weighted(w.cwiseProduct(d2)));
    d2 = d2.cwiseMin((pts.rowwise() - res.centers.row(k)).rowwise().squaredNorm());
  }

  res.assignments.assign(static_cast<size_t>(m), 0);
  double prev_sse = std::numeric_limits<double>::infinity();
  for (long iter = 0; iter < kLloydIterations; ++iter) {
    // Assignment step (ties toward the lowest center index).
    double sse = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      int best = 0;
      double best_d = (pts.row(i) - res.centers.row(0)).squaredNorm();
      for (Eigen::Index k = 1; k < K; ++k) {
        const double d = (pts.row(i) - res.centers.row(k)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(k);
        }
      }
      res.assignments[static_cast<size_t>(i)] = best;
      sse += w[i] * best_d;
    }
    res.weighted_sse = sse;
    if (std::abs(prev_sse - sse) <= kLloydTolerance) break;
    prev_sse = sse;

    // Update step: weighted means; an emptied cluster is reseated at the
    // point contributing the largest weighted distance (lowest index wins).
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(K, D);
    Eigen::VectorXd mass = Eigen::VectorXd::Zero(K);
    for (Eigen::Index i = 0; i < m; ++i) {
      const int k = res.assignments[static_cast<size_t>(i)];
      sums.row(k) += w[i] * pts.row(i);
      mass[k] += w[i];
    }
    for (Eigen::Index k = 0; k < K; ++k) {
      if (mass[k] > 0.0) {
        res.centers.row(k) = sums.row(k) / mass[k];
        continue;
      }
      Eigen::Index worst = 0;
      double worst_d = -1.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        const double d =
            w[i] *
            (pts.row(i) - res.centers.row(res.assignments[static_cast<size_t>(i)]))
                .squaredNorm();
        if (d > worst_d) {
          worst_d = d;
          worst = i;
        }
      }
      res.centers.row(k) = pts.row(worst);
    }
  }
  return res;
}

}  // namespace

void ActivationMatrix::validate() const {
  if (data.size() == 0) throw DimensionError("empty activation matrix");
  if (centered) {
    const double worst = data.colwise().mean().cwiseAbs().maxCoeff();
    if (!(worst <= 1e-10))
      throw DomainError("activation matrix claims to be centered but a column mean is " +
                        std::to_string(worst));
  }
}

ActivationMatrix center_activations(Eigen::MatrixXd data, std::string source) {
  if (data.rows() < 1 || data.cols() < 1)
    throw DimensionError("cannot center an empty activation matrix");
  ActivationMatrix out;
  data.rowwise() -= data.colwise().mean();
  out.data = std::move(data);
  out.centered = true;
  out.source = std::move(source);
  return out;
}

ActivationMatrix relu_probe_activations(const nets::ReluNet& net, Eigen::Index n_probe,
                                        std::uint64_t seed) {
  if (n_probe < 2) throw DimensionError("probe set needs at least 2 samples");
  const Eigen::MatrixXd X = tasks::sample_sphere(n_probe, net.dim(), seed);
  return center_activations((X * net.hidden.transpose()).cwiseMax(0.0),
                            "relu_probe");
}

double participation_ratio(const ActivationMatrix& X, bool auto_center) {
  ActivationMatrix tmp;
  const ActivationMatrix& C = ensure_centered(X, auto_center, tmp);
  return pr_of_centered(C);
}

double ensd(const ActivationMatrix& X, const ActivationMatrix& Y, bool auto_center) {
  ActivationMatrix tx, ty;
  const ActivationMatrix& A = ensure_centered(X, auto_center, tx);
  const ActivationMatrix& B = ensure_centered(Y, auto_center, ty);
  if (A.n() != B.n())
    throw DimensionError("shared-dimension metrics need matching sample counts");
  require_nonzero(A);
  require_nonzero(B);
  const double cross = cross_gram_trace(A.data, B.data);
  const double self_a = cross_gram_trace(A.data, A.data);
  const double self_b = cross_gram_trace(B.data, B.data);
  return cross * A.data.squaredNorm() * B.data.squaredNorm() / (self_a * self_b);
}

double cka(const ActivationMatrix& X, const ActivationMatrix& Y, bool auto_center) {
  ActivationMatrix tx, ty;
  const ActivationMatrix& A = ensure_centered(X, auto_center, tx);
  const ActivationMatrix& B = ensure_centered(Y, auto_center, ty);
  return ensd(A, B, false) /
         std::sqrt(pr_of_centered(A) * pr_of_centered(B));
}

NestedSignature nested_selection_signature(const ActivationMatrix& pre,
                                           const ActivationMatrix& post, double delta,
                                           double epsilon, bool auto_center) {
  if (!(delta >= 0.0) || !(epsilon >= 0.0))
    throw ConfigError("signature thresholds must be nonnegative");
  ActivationMatrix tx, ty;
  const ActivationMatrix& A = ensure_centered(pre, auto_center, tx);
  const ActivationMatrix& B = ensure_centered(post, auto_center, ty);
  NestedSignature sig;
  sig.pr_pre = pr_of_centered(A);
  sig.pr_post = pr_of_centered(B);
  sig.ensd = ensd(A, B, false);
  sig.flag = sig.pr_post < sig.pr_pre - delta &&
             std::abs(sig.ensd - sig.pr_post) < epsilon * sig.pr_post;
  return sig;
}

ClusterReport weighted_kmeans_inertia(const nets::ReluNet& net, Eigen::Index K,
                                      std::uint64_t seed, long restarts) {
  if (K < 1) throw ConfigError("cluster count must be at least 1");
  if (restarts < 1) throw ConfigError("need at least one clustering restart");
  const Eigen::Index H = net.units(), D = net.dim();

  ClusterReport report;
  report.weights.resize(H);
  std::vector<Eigen::Index> eligible;
  for (Eigen::Index h = 0; h < H; ++h) {
    report.weights[h] = net.readout.col(h).norm() * net.hidden.row(h).norm();
    if (report.weights[h] > 0.0) eligible.push_back(h);
  }
  const Eigen::Index m = static_cast<Eigen::Index>(eligible.size());
  if (m == 0)
    throw DegenerateObjectiveError("no hidden unit carries nonzero importance weight");

  report.K = std::min(K, m);
  report.reduced_K = report.K < K;
  report.assignments.assign(static_cast<size_t>(H), -1);

  Eigen::MatrixXd pts(m, D);
  Eigen::VectorXd w(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index h = eligible[static_cast<size_t>(i)];
    pts.row(i) = net.hidden.row(h) / net.hidden.row(h).norm();
    w[i] = report.weights[h];
  }
  w /= w.sum();

  const Eigen::RowVectorXd mean = w.transpose() * pts;
  const double total_var = (pts.rowwise() - mean).rowwise().squaredNorm().dot(w);

  LloydResult best;
  long best_restart = -1;
  for (long r = 0; r < restarts; ++r) {
    auto rng = restart_rng(seed, r);
    LloydResult run = lloyd_run(pts, w, report.K, rng);
    if (run.weighted_sse < best.weighted_sse) {
      best = std::move(run);
      best_restart = r;
    }
  }
  (void)best_restart;

  report.centers = std::move(best.centers);
  for (Eigen::Index i = 0; i < m; ++i)
    report.assignments[static_cast<size_t>(eligible[static_cast<size_t>(i)])] =
        best.assignments[static_cast<size_t>(i)];
  report.inertia = total_var > 0.0 ? best.weighted_sse / total_var : 0.0;
  return report;
}

double alignment_score(const nets::ReluNet& teacher, const ClusterReport& report) {
  if (report.K < 1 || report.centers.rows() < 1)
    throw ConfigError("alignment needs a cluster report with at least one center");
  if (teacher.dim() != report.centers.cols())
    throw DimensionError("teacher and cluster centers live in different input widths");

  std::vector<int> degenerate;
  for (Eigen::Index h = 0; h < teacher.units(); ++h)
    if (teacher.hidden.row(h).norm() == 0.0) degenerate.push_back(static_cast<int>(h));
  if (!degenerate.empty())
    throw DegenerateUnitError("teacher has zero-norm hidden units", degenerate);

  double acc = 0.0;
  for (Eigen::Index h = 0; h < teacher.units(); ++h) {
    const Eigen::RowVectorXd t = teacher.hidden.row(h) / teacher.hidden.row(h).norm();
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < report.centers.rows(); ++k) {
      const double norm = report.centers.row(k).norm();
      const double cosine = norm > 0.0 ? t.dot(report.centers.row(k)) / norm : 0.0;
      best = std::max(best, cosine);
    }
    acc += best;
  }
  return acc / static_cast<double>(teacher.units());
}

double topk_variance_fraction(const Eigen::VectorXd& beta, Eigen::Index k) {
  if (k < 1 || k > beta.size())
    throw ConfigError("top-k count must lie in [1, D]");
  const double total = beta.squaredNorm();
  if (total == 0.0)
    throw DomainError("the zero coefficient vector has no variance to apportion");
  std::vector<double> sq(static_cast<size_t>(beta.size()));
  for (Eigen::Index d = 0; d < beta.size(); ++d)
    sq[static_cast<size_t>(d)] = beta[d] * beta[d];
  std::partial_sort(sq.begin(), sq.begin() + k, sq.end(), std::greater<double>());
  return std::accumulate(sq.begin(), sq.begin() + k, 0.0) / total;
}

double aux_overlap_fraction(const Eigen::VectorXd& beta,
                            const std::vector<Eigen::Index>& aux_support) {
  const double total = beta.squaredNorm();
  if (total == 0.0)
    throw DomainError("the zero coefficient vector has no overlap to measure");
  std::vector<bool> seen(static_cast<size_t>(beta.size()), false);
  double acc = 0.0;
  for (const Eigen::Index d : aux_support) {
    if (d < 0 || d >= beta.size())
      throw DimensionError("auxiliary support index out of range");
    if (seen[static_cast<size_t>(d)]) continue;
    seen[static_cast<size_t>(d)] = true;
    acc += beta[d] * beta[d];
  }
  return acc / total;
}

}  // namespace mtlft::analysis
