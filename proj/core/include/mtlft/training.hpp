#pragma once

// Full-batch gradient-descent training with an aggressive learning-rate
// backoff, plus the five training paradigms built on top of it:
//
//   STL   — train a fresh student on the main task only.
//   MTL   — train a fresh two-output student jointly on auxiliary + main,
//           minimizing the sum of per-task mean squared errors.
//   PTFT  — pretrain a single-output student on the auxiliary task, rescale
//           the hidden weights, re-initialize the readout, then finetune all
//           parameters on the main task.
//   PTFT_LinearProbe — as PTFT but finetuning only the readout, solved in
//           closed form (minimum-norm least squares on frozen features).
//   PTFT_NTK — linearize the network at the post-re-initialization point and
//           fit the main task with the minimum-norm tangent-feature solution.
//
// The learning-rate heuristic: start at lr_init; whenever the trajectory
// shows the current rate cannot converge — the loss exceeds
// divergence_threshold, goes non-finite, exceeds relative_divergence times
// the best loss seen at this rate, or makes no progress for stall_window
// steps — restart from the initial parameters with the rate divided by
// lr_divisor. The run that counts is therefore a single clean constant-rate
// trajectory. This matters for tiny initializations: one oversized early
// step can inflate the weight scale by orders of magnitude while barely
// moving the loss, which silently destroys the small-init solution bias, so
// recovery must discard the whole attempt rather than just the last step.
// Stop at loss < loss_threshold or once max_steps total steps are spent.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mtlft/errors.hpp"
#include "mtlft/nets.hpp"
#include "mtlft/tasks.hpp"

namespace mtlft::training {

struct TrainConfig {
  double lr_init = 1e6;
  double lr_divisor = 10.0;
  double divergence_threshold = 100.0;
  double loss_threshold = 1e-10;
  long max_steps = 5'000'000;
  // Extra restart triggers: a step that leaves the loss above
  // relative_divergence * (best loss at this rate), and stall_window steps
  // without a new best loss. Both catch rates that oscillate indefinitely
  // below divergence_threshold instead of converging.
  double relative_divergence = 10.0;
  long stall_window = 100'000;

  static TrainConfig diag_defaults();  // loss_threshold 1e-10, max_steps 5e6
  static TrainConfig relu_defaults();  // loss_threshold 1e-8,  max_steps 2e6
  void validate() const;               // throws ConfigError
};

struct TraceSample {
  long step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct Trace {
  std::vector<TraceSample> samples;  // geometrically decimated, ends at final
  long steps = 0;
  long lr_reductions = 0;
  double final_loss = 0.0;
  double final_lr = 0.0;
  bool converged = false;  // false: max_steps exhausted above loss_threshold
};

// Trains in place; both overloads are deterministic (no randomness).
Trace train_to_convergence(nets::DiagonalLinearNet& net, const Eigen::MatrixXd& X,
                           const Eigen::MatrixXd& Y, const nets::TaskMask* mask,
                           const TrainConfig& cfg);
Trace train_to_convergence(nets::ReluNet& net, const Eigen::MatrixXd& X,
                           const Eigen::MatrixXd& Y, const nets::TaskMask* mask,
                           const TrainConfig& cfg);

// Row-stacks an auxiliary and a main dataset for joint two-output training:
// output 0 is the auxiliary task, output 1 the main task, and the mask
// restricts each output's mean squared error to its own samples.
struct StackedTasks {
  Eigen::MatrixXd X;
  Eigen::MatrixXd Y;
  nets::TaskMask mask;
};
StackedTasks stack_mtl(const tasks::Dataset& aux, const tasks::Dataset& main);

// ---------------------------------------------------------------------------
// Paradigms
// ---------------------------------------------------------------------------

enum class Paradigm { STL, MTL, PTFT, PTFT_LinearProbe, PTFT_NTK };
std::string to_string(Paradigm p);
Paradigm paradigm_from_string(const std::string& name);

struct ParadigmSpec {
  Paradigm kind = Paradigm::STL;

  // Diagonal students: constant init magnitude and the readout re-init value
  // used when finetuning (both pathways' readouts are set to gamma).
  double init_scale = 1e-6;
  double gamma = 1e-3;

  // ReLU students: architecture and init scales (0 means the conventional
  // defaults sqrt(2/D) and sqrt(2/H)); the finetuning readout re-init is
  // Gaussian with variance readout_reinit_coeff * sqrt(2/H).
  Eigen::Index hidden_units = 200;
  double hidden_scale = 0.0;
  double readout_scale = 0.0;
  double readout_reinit_coeff = 1e-3;

  // Hidden weights are multiplied by this factor between pretraining and
  // finetuning (the readout is re-initialized immediately afterwards, so
  // rescaling it would be overwritten).
  double rescale_factor = 1.0;

  std::uint64_t seed = 0;  // init and re-init draws derive from this
  TrainConfig pretrain = TrainConfig::diag_defaults();
  TrainConfig finetune = TrainConfig::diag_defaults();

  static ParadigmSpec diag_defaults(Paradigm kind, std::uint64_t seed);
  static ParadigmSpec relu_defaults(Paradigm kind, std::uint64_t seed);
};

// Result of one paradigm run. `model` predicts the main task; the optional
// nets expose the final and post-pretraining parameters when the paradigm
// has them (the NTK baseline's model is not a network). `aborted` marks a
// pipeline stopped because pretraining failed to converge; `flagged` marks
// rank-deficient closed-form solves (pseudoinverse used).
struct RunOutput {
  tasks::Predictor model;
  std::optional<nets::DiagonalLinearNet> diag;
  std::optional<nets::ReluNet> relu;
  std::optional<nets::DiagonalLinearNet> diag_pretrained;
  std::optional<nets::ReluNet> relu_pretrained;
  Trace pretrain_trace;
  Trace train_trace;
  bool aborted = false;
  bool flagged = false;
  double wall_seconds = 0.0;
};

// Single-task baselines (fresh student on the main task only).
RunOutput run_stl_diag(const tasks::Dataset& main, const ParadigmSpec& spec);
RunOutput run_stl_relu(const tasks::Dataset& main, const ParadigmSpec& spec);

// Joint training; the returned model reads output 1 (the main task head).
RunOutput run_mtl_diag(const tasks::Dataset& aux, const tasks::Dataset& main,
                       const ParadigmSpec& spec);
RunOutput run_mtl_relu(const tasks::Dataset& aux, const tasks::Dataset& main,
                       const ParadigmSpec& spec);

// Pretraining stages, exposed separately so sweeps can cache them.
struct DiagPretrain {
  nets::DiagonalLinearNet net;  // converged on the auxiliary task
  Trace trace;
};
struct ReluPretrain {
  nets::ReluNet net;
  Trace trace;
};
DiagPretrain pretrain_diag(const tasks::Dataset& aux, const ParadigmSpec& spec);
ReluPretrain pretrain_relu(const tasks::Dataset& aux, const ParadigmSpec& spec);

// Finetuning stages. finetune_ptft_diag implements the zero-output restart:
// both hidden pathways are set to their sum, multiplied by rescale_factor,
// and both readouts set to gamma, so the network function starts at exactly
// zero; then all parameters train on the main task. finetune_ptft_relu
// rescales the hidden weights and re-initializes the readout from
// N(0, readout_reinit_coeff * sqrt(2/H)).
RunOutput finetune_ptft_diag(const nets::DiagonalLinearNet& pretrained,
                             const tasks::Dataset& main, const ParadigmSpec& spec);
RunOutput finetune_ptft_relu(const nets::ReluNet& pretrained,
                             const tasks::Dataset& main, const ParadigmSpec& spec);

// Readout-only finetuning on frozen hidden weights: minimum-norm least
// squares on the frozen feature matrix (for diagonal nets the features are
// the coordinates scaled by the pathway weights).
RunOutput linear_probe_diag(const nets::DiagonalLinearNet& pretrained,
                            const tasks::Dataset& main);
RunOutput linear_probe_relu(const nets::ReluNet& pretrained,
                            const tasks::Dataset& main);

// Minimum-norm regression on the tangent features (gradients of the output
// with respect to all parameters) at the given point; `at` should already
// carry the re-initialized readout. The model is f(x) = f_at(x) + <phi(x), d>.
RunOutput ntk_baseline_relu(const nets::ReluNet& at, const tasks::Dataset& main);

// Full pipelines (pretrain + the finetuning stage for spec.kind).
RunOutput run_ptft_diag(const tasks::Dataset& aux, const tasks::Dataset& main,
                        const ParadigmSpec& spec);
RunOutput run_ptft_relu(const tasks::Dataset& aux, const tasks::Dataset& main,
                        const ParadigmSpec& spec);

}  // namespace mtlft::training
