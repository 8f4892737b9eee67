#pragma once

// Teacher-student task generators. Teachers are sparse ground-truth models
// (linear coefficient vectors or few-unit ReLU networks) for an auxiliary
// and a main task with controlled support overlap, unit correlation, and
// coefficient magnitude. Datasets are noiseless samples with inputs drawn
// uniformly from the unit sphere.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mtlft/errors.hpp"
#include "mtlft/nets.hpp"

namespace mtlft::tasks {

enum class TaskId { aux, main };
std::string to_string(TaskId id);
TaskId task_id_from_string(const std::string& name);

// ---------------------------------------------------------------------------
// Teachers
// ---------------------------------------------------------------------------

// Sparse linear teacher pair: k_aux / k_main nonzero coefficients with
// exactly n_overlap shared support indices; nonzero entries are
// +/- coeff_magnitude with independent random signs.
struct LinearTeacherSpec {
  Eigen::Index D = 0;
  Eigen::Index k_aux = 0;
  Eigen::Index k_main = 0;
  Eigen::Index n_overlap = 0;
  double coeff_magnitude = 1.0;
  std::uint64_t seed = 0;
};

struct LinearTeacher {
  Eigen::VectorXd beta_aux;                // D
  Eigen::VectorXd beta_main;               // D
  std::vector<Eigen::Index> support_aux;   // sorted nonzero indices
  std::vector<Eigen::Index> support_main;  // sorted nonzero indices
};

// Throws ConfigError when the counts are infeasible (support sizes above D,
// overlap above either support, or combined support exceeding D).
LinearTeacher gen_linear_teacher(const LinearTeacherSpec& spec);

// Few-unit ReLU teacher pair. The first n_shared units of the two teachers
// are paired: with correlation 1 the main-task directions are bitwise copies
// of the auxiliary ones, otherwise they are mixed with a fresh orthogonal
// component to hit the requested cosine similarity exactly. Remaining units
// are independent. Readout weights are +1 on the auxiliary task and
// +main_magnitude on the main task (or Gaussian with those scales when
// gaussian_readout is set).
struct ReluTeacherSpec {
  Eigen::Index D = 0;
  Eigen::Index units_aux = 0;
  Eigen::Index units_main = 0;
  Eigen::Index n_shared = 0;
  double correlation = 1.0;
  double main_magnitude = 1.0;
  bool gaussian_readout = false;
  std::uint64_t seed = 0;
};

struct ReluTeacherPair {
  nets::ReluNet aux;
  nets::ReluNet main;
};

// Throws DomainError for |correlation| > 1, ConfigError for infeasible counts.
ReluTeacherPair gen_relu_teacher(const ReluTeacherSpec& spec);

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct Dataset {
  Eigen::MatrixXd X;  // n x D, unit-norm rows
  Eigen::MatrixXd y;  // n x O
  TaskId task_id = TaskId::main;
  std::string fingerprint;  // identity hash of the generating teacher

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index dim() const { return X.cols(); }
  Eigen::Index outputs() const { return y.cols(); }
};

// n i.i.d. rows uniform on the unit sphere in R^D (normalized Gaussians).
Eigen::MatrixXd sample_sphere(Eigen::Index n, Eigen::Index D, std::uint64_t seed);

// Noiseless datasets: targets are the exact teacher outputs on sphere inputs.
Dataset sample_dataset(const Eigen::VectorXd& beta, Eigen::Index n, TaskId task_id,
                       std::uint64_t seed);
Dataset sample_dataset(const nets::ReluNet& teacher, Eigen::Index n, TaskId task_id,
                       std::uint64_t seed);

// Stable 64-bit content hash of the parameters, as fixed-width hex.
std::string fingerprint_of(const Eigen::VectorXd& beta);
std::string fingerprint_of(const nets::ReluNet& net);

// ---------------------------------------------------------------------------
// Generalization measurement
// ---------------------------------------------------------------------------

// Single-output predictor: maps an n x D input batch to n predictions.
using Predictor = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

Predictor predictor(const Eigen::VectorXd& beta);
Predictor predictor(const nets::DiagonalLinearNet& net, Eigen::Index output = 0);
Predictor predictor(const nets::ReluNet& net, Eigen::Index output = 0);

// Mean squared error between model and teacher on a fresh test sample of
// n_test sphere points; deterministic per seed.
double generalization_loss(const Predictor& model, const Predictor& teacher,
                           Eigen::Index D, Eigen::Index n_test = 8192,
                           std::uint64_t seed = 0x746573747365744eULL);

// ---------------------------------------------------------------------------
// Serialization (checkpoint kind "dataset")
// ---------------------------------------------------------------------------

void save_dataset(const std::filesystem::path& path, const Dataset& data,
                  std::uint64_t seed);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace mtlft::tasks
