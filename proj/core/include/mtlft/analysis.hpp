#pragma once

// Representation and solution diagnostics.
//
// Spectrum-based dimensionality measures (participation ratio, effective
// number of shared dimensions, centered kernel alignment) operate on
// column-centered activation matrices: n samples of p unit responses. For
// shallow ReLU nets the conventional activation matrix is the post-ReLU
// hidden response on a fixed probe set of points drawn uniformly from the
// unit sphere, so pre/post comparisons always share the sample set.
// Externally produced matrices (e.g. deep-net dumps) enter through
// center_activations on a raw matrix.
//
// Unit-structure diagnostics (weighted k-means inertia, alignment score)
// summarize how many distinct hidden directions a trained ReLU net actually
// uses and how well they match a teacher. Coefficient diagnostics (top-k
// variance fraction, auxiliary-overlap fraction) do the same for diagonal
// nets' effective coefficients.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mtlft/errors.hpp"
#include "mtlft/nets.hpp"

namespace mtlft::analysis {

// Default seed of the fixed sphere probe set ("probeset").
inline constexpr std::uint64_t kProbeSeed = 0x70726f6265736574ULL;
inline constexpr Eigen::Index kProbeSamples = 4096;

// n x p response matrix. `centered` promises column means are zero (checked
// to 1e-10 by validate); the spectrum diagnostics require centered input and
// can center a copy on the fly when asked to.
struct ActivationMatrix {
  Eigen::MatrixXd data;
  bool centered = false;
  std::string source;

  Eigen::Index n() const { return data.rows(); }
  Eigen::Index p() const { return data.cols(); }
  void validate() const;  // throws DomainError if `centered` is a lie
};

// Subtracts column means and tags the result as centered.
ActivationMatrix center_activations(Eigen::MatrixXd data, std::string source = {});

// Post-ReLU hidden responses of `net` on n_probe fixed sphere samples,
// centered. The default seed pins one probe set for all nets of a given
// input width, which keeps pairwise metrics meaningful.
ActivationMatrix relu_probe_activations(const nets::ReluNet& net,
                                        Eigen::Index n_probe = kProbeSamples,
                                        std::uint64_t seed = kProbeSeed);

// ---------------------------------------------------------------------------
// Spectrum diagnostics
// ---------------------------------------------------------------------------
//
// All three accept uncentered input only when auto_center is true (the
// default), in which case they center a copy first. A matrix of all zeros has
// no spectrum to measure and raises DomainError.

// (sum lambda_i)^2 / sum lambda_i^2 of C = X^T X / n: a soft count of the
// dimensions the responses actually occupy. 1 <= PR <= min(n-1, p) for
// centered nonzero data.
double participation_ratio(const ActivationMatrix& X, bool auto_center = true);

// Effective number of shared dimensions:
//   tr(Y^T X X^T Y) * tr(X^T X) * tr(Y^T Y)
//   --------------------------------------- ,
//     tr((X^T X)^2) * tr((Y^T Y)^2)
// symmetric in (X, Y); equals PR(X) at Y = X, and ~0 for uncorrelated
// responses. Requires matching sample counts.
double ensd(const ActivationMatrix& X, const ActivationMatrix& Y,
            bool auto_center = true);

// ENSD normalized by the geometric mean of the participation ratios; equal to
// the centered kernel alignment of the linear kernels, in [0, 1].
double cka(const ActivationMatrix& X, const ActivationMatrix& Y,
           bool auto_center = true);

// Pretraining-vs-finetuning dimensionality comparison. The flag marks the
// nested-feature-selection pattern: the finetuned representation lost
// dimensions (pr_post < pr_pre - delta) and what remains lives inside the
// pretrained span (|ensd - pr_post| < epsilon * pr_post).
struct NestedSignature {
  double pr_pre = 0.0;
  double pr_post = 0.0;
  double ensd = 0.0;
  bool flag = false;
};
NestedSignature nested_selection_signature(const ActivationMatrix& pre,
                                           const ActivationMatrix& post,
                                           double delta = 0.5, double epsilon = 0.15,
                                           bool auto_center = true);

// ---------------------------------------------------------------------------
// Unit-structure diagnostics
// ---------------------------------------------------------------------------

struct ClusterReport {
  Eigen::Index K = 0;          // clusters actually used
  Eigen::MatrixXd centers;     // K x D
  double inertia = 0.0;        // weighted unexplained variance fraction, [0, 1]
  std::vector<int> assignments;  // per hidden unit; -1 for zero-weight units
  Eigen::VectorXd weights;     // per-unit importance |v_h| * ||w_h||
  bool reduced_K = false;      // requested K exceeded the nonzero-weight units
};

// Clusters the unit-normalized hidden directions of `net`, weighting each
// unit by the magnitude of its input-output contribution |v_h| * ||w_h||
// (the readout column norm for multi-output nets). k-means++ seeding, best
// of `restarts` runs of at most 300 Lloyd iterations (tolerance 1e-9),
// deterministic per seed with ties broken toward the earliest restart.
// inertia = weighted within-cluster variance / weighted total variance
// (0 when the directions carry no variance at all). Throws
// DegenerateObjectiveError when no unit has positive weight; requested K
// above the number of weighted units is reduced and flagged.
ClusterReport weighted_kmeans_inertia(const nets::ReluNet& net, Eigen::Index K,
                                      std::uint64_t seed, long restarts = 10);

// Mean over teacher hidden units of the best cosine similarity to any
// cluster center; in [-1, 1]. Zero-norm centers count as cosine 0.
double alignment_score(const nets::ReluNet& teacher, const ClusterReport& report);

// ---------------------------------------------------------------------------
// Coefficient diagnostics
// ---------------------------------------------------------------------------

// Fraction of squared-coefficient mass carried by the k largest entries;
// nondecreasing in k and 1 at k = D.
double topk_variance_fraction(const Eigen::VectorXd& beta, Eigen::Index k);

// Fraction of squared-coefficient mass inside the given coordinate set
// (duplicates tolerated); in [0, 1].
double aux_overlap_fraction(const Eigen::VectorXd& beta,
                            const std::vector<Eigen::Index>& aux_support);

}  // namespace mtlft::analysis
