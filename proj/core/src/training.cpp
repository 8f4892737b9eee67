#include "mtlft/training.hpp"

#include <chrono>
#include <cmath>
#include <random>

#include <Eigen/QR>

namespace mtlft::training {

namespace {

class Stopwatch {
 public:
  Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point t0_;
};

struct DiagPolicy {
  using Net = nets::DiagonalLinearNet;
  using Grad = nets::DiagGradients;
  static Grad gradients(const Net& net, const Eigen::MatrixXd& X,
                        const Eigen::MatrixXd& Y, const nets::TaskMask* mask) {
    return nets::mse_gradients(net, X, Y, mask);
  }
  static void apply(Net& net, const Grad& g, double lr) {
    net.w_plus -= lr * g.w_plus;
    net.w_minus -= lr * g.w_minus;
    net.v_plus -= lr * g.v_plus;
    net.v_minus -= lr * g.v_minus;
  }
};

struct ReluPolicy {
  using Net = nets::ReluNet;
  using Grad = nets::ReluGradients;
  static Grad gradients(const Net& net, const Eigen::MatrixXd& X,
                        const Eigen::MatrixXd& Y, const nets::TaskMask* mask) {
    return nets::mse_gradients(net, X, Y, mask);
  }
  static void apply(Net& net, const Grad& g, double lr) {
    net.hidden -= lr * g.hidden;
    net.readout -= lr * g.readout;
  }
};

template <class Policy>
Trace gd_loop(typename Policy::Net& net, const Eigen::MatrixXd& X,
              const Eigen::MatrixXd& Y, const nets::TaskMask* mask,
              const TrainConfig& cfg) {
  cfg.validate();
  Trace tr;
  double lr = cfg.lr_init;
  long next_record = 1;
  auto maybe_record = [&](long step, double loss) {
    if (step >= next_record) {
      tr.samples.push_back({step, loss, lr});
      next_record = std::max(next_record + 1, static_cast<long>(next_record * 1.2));
    }
  };

  auto g = Policy::gradients(net, X, Y, mask);
  tr.samples.push_back({0, g.loss, lr});
  if (g.loss < cfg.loss_threshold) {
    tr.converged = true;
    tr.final_loss = g.loss;
    tr.final_lr = lr;
    return tr;
  }

  const typename Policy::Net init_net = net;
  const typename Policy::Grad init_g = g;
  long step = 0;
  double best_loss = g.loss;
  long last_improvement = 0;
  while (step < cfg.max_steps) {
    Policy::apply(net, g, lr);
    ++step;
    g = Policy::gradients(net, X, Y, mask);
    const bool blew_up = !(g.loss <= cfg.divergence_threshold) ||
                         !(g.loss <= cfg.relative_divergence * best_loss);
    const bool stalled = step - last_improvement >= cfg.stall_window;
    if (blew_up || stalled) {
      // This rate cannot converge (explosion, a bounce far above its own
      // best loss, or no progress for a whole window): restart the whole
      // trajectory from the initial parameters at a smaller rate. A mid-run
      // rollback would keep the damage an oversized early step does to tiny
      // initializations (one such step can silently inflate the weight scale
      // without raising the loss, destroying the small-init solution bias),
      // so the trajectory that counts is a clean constant-rate run.
      net = init_net;
      g = init_g;
      lr /= cfg.lr_divisor;
      ++tr.lr_reductions;
      best_loss = g.loss;
      last_improvement = step;
      // Only the surviving trajectory is reported: drop samples from the
      // abandoned attempt. The step counter keeps counting so max_steps
      // bounds the total work.
      tr.samples.clear();
      tr.samples.push_back({step, g.loss, lr});
      next_record = step + 1;
      continue;
    }
    if (g.loss < best_loss) {
      best_loss = g.loss;
      last_improvement = step;
    }
    if (g.loss < cfg.loss_threshold) {
      tr.converged = true;
      break;
    }
    maybe_record(step, g.loss);
  }
  tr.steps = step;
  tr.final_loss = g.loss;
  tr.final_lr = lr;
  tr.samples.push_back({step, g.loss, lr});
  return tr;
}

// Minimum-norm least-squares readout on a frozen feature matrix. Rank
// deficiency is handled by the pseudoinverse (the zero-ridge limit); the
// flag reports that it occurred.
struct ProbeSolve {
  Eigen::VectorXd coeffs;
  double mean_squared_residual = 0.0;
  bool rank_deficient = false;
};

ProbeSolve min_norm_fit(const Eigen::MatrixXd& features, const Eigen::VectorXd& y) {
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(features);
  ProbeSolve out;
  out.coeffs = cod.solve(y);
  out.rank_deficient = cod.rank() < std::min(features.rows(), features.cols());
  out.mean_squared_residual = (features * out.coeffs - y).squaredNorm() /
                              static_cast<double>(features.rows());
  return out;
}

std::uint64_t reinit_stream(std::uint64_t seed) {
  return seed ^ 0x9e3779b97f4a7c15ULL;
}

// Gradients of the single output with respect to all parameters, one row per
// sample: first the H readout derivatives (the activations), then for each
// unit h the D hidden-weight derivatives v_h * 1[pre > 0] * x.
Eigen::MatrixXd relu_tangent_features(const nets::ReluNet& net,
                                      const Eigen::MatrixXd& X) {
  const Eigen::Index H = net.units(), D = net.dim();
  const Eigen::MatrixXd pre = X * net.hidden.transpose();  // n x H
  Eigen::MatrixXd phi(X.rows(), H + H * D);
  phi.leftCols(H) = pre.cwiseMax(0.0);
  for (Eigen::Index h = 0; h < H; ++h) {
    const Eigen::ArrayXd gate =
        (pre.col(h).array() > 0.0).cast<double>() * net.readout(0, h);
    phi.middleCols(H + h * D, D) = X.array().colwise() * gate;
  }
  return phi;
}

double relu_reinit_variance(double coeff, Eigen::Index H) {
  return coeff * std::sqrt(2.0 / static_cast<double>(H));
}

nets::ReluNet init_relu_student(Eigen::Index D, const ParadigmSpec& spec,
                                Eigen::Index outputs) {
  const double hs = spec.hidden_scale > 0.0 ? spec.hidden_scale
                                            : nets::default_hidden_scale(D);
  const double rs = spec.readout_scale > 0.0
                        ? spec.readout_scale
                        : nets::default_readout_scale(spec.hidden_units);
  return nets::init_relu(D, spec.hidden_units, outputs, hs, rs, spec.seed);
}

Trace synthetic_trace(double final_loss, double threshold) {
  Trace tr;
  tr.samples.push_back({0, final_loss, 0.0});
  tr.final_loss = final_loss;
  tr.converged = final_loss < threshold;
  return tr;
}

}  // namespace

TrainConfig TrainConfig::diag_defaults() { return TrainConfig{}; }

TrainConfig TrainConfig::relu_defaults() {
  TrainConfig cfg;
  cfg.loss_threshold = 1e-8;
  cfg.max_steps = 2'000'000;
  return cfg;
}

void TrainConfig::validate() const {
  if (!(lr_init > 0.0) || !(lr_divisor > 1.0) || !(divergence_threshold > 0.0) ||
      !(loss_threshold > 0.0) || max_steps < 0)
    throw ConfigError("train config fields must be positive (lr_divisor > 1)");
  if (!(loss_threshold < divergence_threshold))
    throw ConfigError("loss_threshold must lie below divergence_threshold");
  if (!(relative_divergence > 1.0) || stall_window < 1)
    throw ConfigError("relative_divergence must exceed 1 and stall_window be >= 1");
}

Trace train_to_convergence(nets::DiagonalLinearNet& net, const Eigen::MatrixXd& X,
                           const Eigen::MatrixXd& Y, const nets::TaskMask* mask,
                           const TrainConfig& cfg) {
  return gd_loop<DiagPolicy>(net, X, Y, mask, cfg);
}

Trace train_to_convergence(nets::ReluNet& net, const Eigen::MatrixXd& X,
                           const Eigen::MatrixXd& Y, const nets::TaskMask* mask,
                           const TrainConfig& cfg) {
  return gd_loop<ReluPolicy>(net, X, Y, mask, cfg);
}

StackedTasks stack_mtl(const tasks::Dataset& aux, const tasks::Dataset& main) {
  if (aux.dim() != main.dim())
    throw DimensionError("auxiliary and main datasets have different input widths");
  if (aux.outputs() != 1 || main.outputs() != 1)
    throw DimensionError("stacking expects single-output task datasets");
  const Eigen::Index na = aux.n(), nm = main.n();
  StackedTasks st;
  st.X.resize(na + nm, aux.dim());
  st.X << aux.X, main.X;
  st.Y = Eigen::MatrixXd::Zero(na + nm, 2);
  st.Y.col(0).head(na) = aux.y.col(0);
  st.Y.col(1).tail(nm) = main.y.col(0);
  st.mask = nets::TaskMask::Constant(na + nm, 2, false);
  st.mask.col(0).head(na).setConstant(true);
  st.mask.col(1).tail(nm).setConstant(true);
  return st;
}

std::string to_string(Paradigm p) {
  switch (p) {
    case Paradigm::STL: return "stl";
    case Paradigm::MTL: return "mtl";
    case Paradigm::PTFT: return "ptft";
    case Paradigm::PTFT_LinearProbe: return "ptft_lp";
    case Paradigm::PTFT_NTK: return "ptft_ntk";
  }
  throw ConfigError("unhandled paradigm value");
}

Paradigm paradigm_from_string(const std::string& name) {
  if (name == "stl") return Paradigm::STL;
  if (name == "mtl") return Paradigm::MTL;
  if (name == "ptft") return Paradigm::PTFT;
  if (name == "ptft_lp") return Paradigm::PTFT_LinearProbe;
  if (name == "ptft_ntk") return Paradigm::PTFT_NTK;
  throw ConfigError("unknown paradigm: " + name);
}

ParadigmSpec ParadigmSpec::diag_defaults(Paradigm kind, std::uint64_t seed) {
  ParadigmSpec spec;
  spec.kind = kind;
  spec.seed = seed;
  spec.pretrain = TrainConfig::diag_defaults();
  spec.finetune = TrainConfig::diag_defaults();
  return spec;
}

ParadigmSpec ParadigmSpec::relu_defaults(Paradigm kind, std::uint64_t seed) {
  ParadigmSpec spec;
  spec.kind = kind;
  spec.seed = seed;
  spec.pretrain = TrainConfig::relu_defaults();
  spec.finetune = TrainConfig::relu_defaults();
  return spec;
}

RunOutput run_stl_diag(const tasks::Dataset& main, const ParadigmSpec& spec) {
  Stopwatch watch;
  RunOutput out;
  nets::DiagonalLinearNet net = nets::init_diag(main.dim(), 1, spec.init_scale, spec.seed);
  out.train_trace = train_to_convergence(net, main.X, main.y, nullptr, spec.finetune);
  out.model = tasks::predictor(net, 0);
  out.diag = std::move(net);
  out.wall_seconds = watch.seconds();
  return out;
}

RunOutput run_stl_relu(const tasks::Dataset& main, const ParadigmSpec& spec) {
  Stopwatch watch;
  RunOutput out;
  nets::ReluNet net = init_relu_student(main.dim(), spec, 1);
  out.train_trace = train_to_convergence(net, main.X, main.y, nullptr, spec.finetune);
  out.model = tasks::predictor(net, 0);
  out.relu = std::move(net);
  out.wall_seconds = watch.seconds();
  return out;
}

RunOutput run_mtl_diag(const tasks::Dataset& aux, const tasks::Dataset& main,
                       const ParadigmSpec& spec) {
  Stopwatch watch;
  RunOutput out;
  const StackedTasks st = stack_mtl(aux, main);
  nets::DiagonalLinearNet net = nets::init_diag(main.dim(), 2, spec.init_scale, spec.seed);
  out.train_trace = train_to_convergence(net, st.X, st.Y, &st.mask, spec.finetune);
  out.model = tasks::predictor(net, 1);
  out.diag = std::move(net);
  out.wall_seconds = watch.seconds();
  return out;
}

RunOutput run_mtl_relu(const tasks::Dataset& aux, const tasks::Dataset& main,
                       const ParadigmSpec& spec) {
  Stopwatch watch;
  RunOutput out;
  const StackedTasks st = stack_mtl(aux, main);
  nets::ReluNet net = init_relu_student(main.dim(), spec, 2);
  out.train_trace = train_to_convergence(net, st.X, st.Y, &st.mask, spec.finetune);
  out.model = tasks::predictor(net, 1);
  out.relu = std::move(net);
  out.wall_seconds = watch.seconds();
  return out;
}

DiagPretrain pretrain_diag(const tasks::Dataset& aux, const ParadigmSpec& spec) {
  DiagPretrain pre;
  pre.net = nets::init_diag(aux.dim(), 1, spec.init_scale, spec.seed);
  pre.trace = train_to_convergence(pre.net, aux.X, aux.y, nullptr, spec.pretrain);
  return pre;
}

ReluPretrain pretrain_relu(const tasks::Dataset& aux, const ParadigmSpec& spec) {
  ReluPretrain pre;
  pre.net = init_relu_student(aux.dim(), spec, 1);
  pre.trace = train_to_convergence(pre.net, aux.X, aux.y, nullptr, spec.pretrain);
  return pre;
}

RunOutput finetune_ptft_diag(const nets::DiagonalLinearNet& pretrained,
                             const tasks::Dataset& main, const ParadigmSpec& spec) {
  if (pretrained.outputs() != 1)
    throw DimensionError("diagonal finetuning expects a single-output pretrained net");
  if (!(spec.rescale_factor >= 0.0))
    throw ConfigError("rescale factor must be nonnegative");
  Stopwatch watch;
  RunOutput out;
  nets::DiagonalLinearNet net = pretrained;
  // Zero-output restart: both pathways carry the summed hidden weights (the
  // converged pathway pair has one side near zero, so the sum preserves the
  // learned magnitude), scaled by the rescale factor; equal constant readouts
  // make the initial function identically zero.
  const Eigen::VectorXd summed =
      spec.rescale_factor * (net.w_plus + net.w_minus);
  net.w_plus = summed;
  net.w_minus = summed;
  net.v_plus = Eigen::MatrixXd::Constant(1, net.dim(), spec.gamma);
  net.v_minus = Eigen::MatrixXd::Constant(1, net.dim(), spec.gamma);
  out.train_trace = train_to_convergence(net, main.X, main.y, nullptr, spec.finetune);
  out.model = tasks::predictor(net, 0);
  out.diag = std::move(net);
  out.wall_seconds = watch.seconds();
  return out;
}

RunOutput finetune_ptft_relu(const nets::ReluNet& pretrained,
                             const tasks::Dataset& main, const ParadigmSpec& spec) {
  if (pretrained.outputs() != 1)
    throw DimensionError("relu finetuning expects a single-output pretrained net");
  if (!(spec.rescale_factor >= 0.0))
    throw ConfigError("rescale factor must be nonnegative");
  Stopwatch watch;
  RunOutput out;
  nets::ReluNet net = pretrained;
  net.hidden *= spec.rescale_factor;
  const double var = relu_reinit_variance(spec.readout_reinit_coeff, net.units());
  std::mt19937_64 rng(reinit_stream(spec.seed));
  std::normal_distribution<double> gauss(0.0, std::sqrt(var));
  for (Eigen::Index h = 0; h < net.units(); ++h) net.readout(0, h) = gauss(rng);
  out.train_trace = train_to_convergence(net, main.X, main.y, nullptr, spec.finetune);
  out.model = tasks::predictor(net, 0);
  out.relu = std::move(net);
  out.wall_seconds = watch.seconds();
  return out;
}

RunOutput linear_probe_diag(const nets::DiagonalLinearNet& pretrained,
                            const tasks::Dataset& main) {
  Stopwatch watch;
  const Eigen::Index D = pretrained.dim(), n = main.n();
  // Frozen features: coordinate d through the + pathway is w_plus[d] * x_d,
  // through the - pathway -w_minus[d] * x_d; the probe is least squares over
  // the 2D readout entries.
  Eigen::MatrixXd features(n, 2 * D);
  features.leftCols(D) = main.X.array().rowwise() * pretrained.w_plus.transpose().array();
  features.rightCols(D) =
      -(main.X.array().rowwise() * pretrained.w_minus.transpose().array());
  const ProbeSolve fit = min_norm_fit(features, main.y.col(0));

  RunOutput out;
  nets::DiagonalLinearNet net = pretrained;
  net.v_plus = fit.coeffs.head(D).transpose();
  net.v_minus = fit.coeffs.tail(D).transpose();
  out.train_trace = synthetic_trace(fit.mean_squared_residual, 1e-10);
  out.flagged = fit.rank_deficient;
  out.model = tasks::predictor(net, 0);
  out.diag = std::move(net);
  out.wall_seconds = watch.seconds();
  return out;
}

RunOutput linear_probe_relu(const nets::ReluNet& pretrained,
                            const tasks::Dataset& main) {
  Stopwatch watch;
  const Eigen::MatrixXd features =
      (main.X * pretrained.hidden.transpose()).cwiseMax(0.0);
  const ProbeSolve fit = min_norm_fit(features, main.y.col(0));

  RunOutput out;
  nets::ReluNet net = pretrained;
  net.readout = fit.coeffs.transpose();
  out.train_trace = synthetic_trace(fit.mean_squared_residual, 1e-8);
  out.flagged = fit.rank_deficient;
  out.model = tasks::predictor(net, 0);
  out.relu = std::move(net);
  out.wall_seconds = watch.seconds();
  return out;
}

RunOutput ntk_baseline_relu(const nets::ReluNet& at, const tasks::Dataset& main) {
  if (at.outputs() != 1)
    throw DimensionError("tangent-feature regression expects a single output");
  Stopwatch watch;
  const Eigen::MatrixXd phi = relu_tangent_features(at, main.X);
  const Eigen::VectorXd f0 = nets::relu_forward(at, main.X).col(0);
  const ProbeSolve fit = min_norm_fit(phi, main.y.col(0) - f0);

  RunOutput out;
  out.flagged = fit.rank_deficient;
  out.train_trace = synthetic_trace(fit.mean_squared_residual, 1e-8);
  const nets::ReluNet base = at;
  const Eigen::VectorXd delta = fit.coeffs;
  out.model = [base, delta](const Eigen::MatrixXd& X) -> Eigen::VectorXd {
    return nets::relu_forward(base, X).col(0) + relu_tangent_features(base, X) * delta;
  };
  out.relu = at;
  out.wall_seconds = watch.seconds();
  return out;
}

RunOutput run_ptft_diag(const tasks::Dataset& aux, const tasks::Dataset& main,
                        const ParadigmSpec& spec) {
  Stopwatch watch;
  DiagPretrain pre = pretrain_diag(aux, spec);
  RunOutput out;
  if (!pre.trace.converged) {
    out.aborted = true;
    out.model = tasks::predictor(pre.net, 0);
    out.pretrain_trace = std::move(pre.trace);
    out.diag_pretrained = std::move(pre.net);
    out.wall_seconds = watch.seconds();
    return out;
  }
  switch (spec.kind) {
    case Paradigm::PTFT:
      out = finetune_ptft_diag(pre.net, main, spec);
      break;
    case Paradigm::PTFT_LinearProbe:
      out = linear_probe_diag(pre.net, main);
      break;
    default:
      throw ConfigError("run_ptft_diag supports ptft and ptft_lp, got " +
                        to_string(spec.kind));
  }
  out.pretrain_trace = std::move(pre.trace);
  out.diag_pretrained = std::move(pre.net);
  out.wall_seconds = watch.seconds();
  return out;
}

RunOutput run_ptft_relu(const tasks::Dataset& aux, const tasks::Dataset& main,
                        const ParadigmSpec& spec) {
  Stopwatch watch;
  ReluPretrain pre = pretrain_relu(aux, spec);
  RunOutput out;
  if (!pre.trace.converged) {
    out.aborted = true;
    out.model = tasks::predictor(pre.net, 0);
    out.pretrain_trace = std::move(pre.trace);
    out.relu_pretrained = std::move(pre.net);
    out.wall_seconds = watch.seconds();
    return out;
  }
  switch (spec.kind) {
    case Paradigm::PTFT:
      out = finetune_ptft_relu(pre.net, main, spec);
      break;
    case Paradigm::PTFT_LinearProbe:
      out = linear_probe_relu(pre.net, main);
      break;
    case Paradigm::PTFT_NTK: {
      nets::ReluNet at = pre.net;
      at.hidden *= spec.rescale_factor;
      const double var = relu_reinit_variance(spec.readout_reinit_coeff, at.units());
      std::mt19937_64 rng(reinit_stream(spec.seed));
      std::normal_distribution<double> gauss(0.0, std::sqrt(var));
      for (Eigen::Index h = 0; h < at.units(); ++h) at.readout(0, h) = gauss(rng);
      out = ntk_baseline_relu(at, main);
      break;
    }
    default:
      throw ConfigError("run_ptft_relu supports ptft, ptft_lp, ptft_ntk, got " +
                        to_string(spec.kind));
  }
  out.pretrain_trace = std::move(pre.trace);
  out.relu_pretrained = std::move(pre.net);
  out.wall_seconds = watch.seconds();
  return out;
}

}  // namespace mtlft::training
