#include <doctest.h>

#include <cmath>

#include <Eigen/Dense>

#include "helpers.hpp"
#include "mtlft/nets.hpp"
#include "mtlft/penalties.hpp"
#include "mtlft/tasks.hpp"
#include "mtlft/training.hpp"

using namespace mtlft;
using namespace mtlft::training;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double rel_diff(double got, double want) {
  return std::abs(got - want) / std::max(1e-300, std::abs(want));
}

// A nested-support sparse teacher small enough that gradient descent recovers
// the minimum-penalty interpolant: the auxiliary task uses 3 of 20 inputs and
// the main task 2 of those 3.
struct SparseInstance {
  tasks::LinearTeacher teacher;
  tasks::Dataset aux;
  tasks::Dataset main;
};

SparseInstance sparse_instance() {
  tasks::LinearTeacherSpec spec;
  spec.D = 20;
  spec.k_aux = 3;
  spec.k_main = 2;
  spec.n_overlap = 2;
  spec.seed = 3;
  SparseInstance inst;
  inst.teacher = tasks::gen_linear_teacher(spec);
  inst.aux = tasks::sample_dataset(inst.teacher.beta_aux, 15, tasks::TaskId::aux, 103);
  inst.main = tasks::sample_dataset(inst.teacher.beta_main, 10, tasks::TaskId::main, 203);
  return inst;
}

// The retained trace must describe one clean constant-rate trajectory: strictly
// ordered steps, one learning rate throughout, every recorded loss at most the
// divergence threshold, and a final sample matching the summary fields.
void check_trace_is_clean(const Trace& tr, const TrainConfig& cfg) {
  REQUIRE(!tr.samples.empty());
  const double lr = tr.samples.front().lr;
  long prev_step = -1;
  for (const auto& s : tr.samples) {
    CHECK(s.lr == lr);
    CHECK(s.loss <= cfg.divergence_threshold);
    CHECK(s.step >= prev_step);
    prev_step = s.step;
  }
  CHECK(tr.samples.back().step == tr.steps);
  CHECK(tr.samples.back().loss == tr.final_loss);
  CHECK(tr.samples.back().lr == tr.final_lr);
  if (tr.converged) CHECK(tr.final_loss < cfg.loss_threshold);
}

}  // namespace

TEST_SUITE_BEGIN("training");

TEST_CASE("config validation") {
  const TrainConfig good = TrainConfig::diag_defaults();
  CHECK_NOTHROW(good.validate());

  const TrainConfig relu = TrainConfig::relu_defaults();
  CHECK_NOTHROW(relu.validate());
  CHECK(relu.loss_threshold == 1e-8);
  CHECK(relu.max_steps == 2'000'000);
  CHECK(good.loss_threshold == 1e-10);
  CHECK(good.max_steps == 5'000'000);

  TrainConfig bad = good;
  bad.lr_init = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = good;
  bad.lr_divisor = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = good;
  bad.divergence_threshold = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = good;
  bad.loss_threshold = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = good;
  bad.loss_threshold = bad.divergence_threshold;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = good;
  bad.max_steps = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = good;
  bad.relative_divergence = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = good;
  bad.stall_window = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("paradigm names round-trip") {
  for (Paradigm p : {Paradigm::STL, Paradigm::MTL, Paradigm::PTFT,
                     Paradigm::PTFT_LinearProbe, Paradigm::PTFT_NTK})
    CHECK(paradigm_from_string(to_string(p)) == p);
  CHECK_THROWS_AS(paradigm_from_string("nonsense"), ConfigError);
}

TEST_CASE("task stacking: row order, target placement, masks") {
  const auto inst = sparse_instance();
  const StackedTasks st = stack_mtl(inst.aux, inst.main);
  const Eigen::Index na = inst.aux.n(), nm = inst.main.n();

  CHECK(st.X.rows() == na + nm);
  CHECK(st.X.topRows(na) == inst.aux.X);
  CHECK(st.X.bottomRows(nm) == inst.main.X);

  CHECK(st.Y.cols() == 2);
  CHECK(st.Y.col(0).head(na) == inst.aux.y.col(0));
  CHECK((st.Y.col(0).tail(nm).array() == 0.0).all());
  CHECK((st.Y.col(1).head(na).array() == 0.0).all());
  CHECK(st.Y.col(1).tail(nm) == inst.main.y.col(0));

  CHECK(st.mask.col(0).head(na).all());
  CHECK(!st.mask.col(0).tail(nm).any());
  CHECK(!st.mask.col(1).head(na).any());
  CHECK(st.mask.col(1).tail(nm).all());

  SUBCASE("mismatched input widths are rejected") {
    const auto narrow =
        tasks::sample_dataset(VectorXd::Ones(5), 4, tasks::TaskId::aux, 1);
    CHECK_THROWS_AS(stack_mtl(narrow, inst.main), DimensionError);
  }
  SUBCASE("multi-output blocks are rejected") {
    auto wide = inst.aux;
    wide.y = MatrixXd::Zero(na, 2);
    CHECK_THROWS_AS(stack_mtl(wide, inst.main), DimensionError);
  }
}

TEST_CASE("an already-converged start returns without stepping") {
  const MatrixXd X = MatrixXd::Identity(3, 3);
  const MatrixXd Y = MatrixXd::Zero(3, 1);
  // Symmetric constant init puts the effective coefficients at exactly zero,
  // so zero targets mean zero loss before the first step.
  nets::DiagonalLinearNet net = nets::init_diag(3, 1, 1e-3, 0);
  const auto tr = train_to_convergence(net, X, Y, nullptr, TrainConfig::diag_defaults());
  CHECK(tr.converged);
  CHECK(tr.steps == 0);
  CHECK(tr.final_loss == 0.0);
  CHECK(tr.samples.size() == 1);
}

TEST_CASE("a single constraint drives only the constrained coordinate") {
  MatrixXd X(1, 2);
  X << 1, 0;
  MatrixXd Y(1, 1);
  Y << 1;
  nets::DiagonalLinearNet net = nets::init_diag(2, 1, 1e-6, 0);
  const TrainConfig cfg = TrainConfig::diag_defaults();
  const auto tr = train_to_convergence(net, X, Y, nullptr, cfg);
  const VectorXd beta = nets::effective_beta(net).row(0);

  CHECK(tr.converged);
  CHECK(tr.lr_reductions >= 1);  // the opening rate is far too hot
  CHECK(tr.final_lr < cfg.lr_init);
  CHECK(std::abs(beta[0] - 1.0) < 1e-4);
  // The second coordinate never receives gradient and the symmetric init
  // cancels exactly, so it stays at exactly zero.
  CHECK(beta[1] == 0.0);
  check_trace_is_clean(tr, cfg);
}

TEST_CASE("a rate that makes no progress is abandoned after the stall window") {
  // Two identical inputs with opposite targets: the optimum predicts zero,
  // which is where the symmetric init already sits, so every gradient is
  // exactly zero and no rate can ever improve the loss of exactly 1.
  MatrixXd X(2, 2);
  X << 1, 0, 1, 0;
  MatrixXd Y(2, 1);
  Y << 1, -1;
  nets::DiagonalLinearNet net = nets::init_diag(2, 1, 1e-3, 0);
  TrainConfig cfg;
  cfg.max_steps = 1000;
  cfg.stall_window = 100;
  const auto tr = train_to_convergence(net, X, Y, nullptr, cfg);
  CHECK(!tr.converged);
  CHECK(tr.steps == 1000);
  CHECK(tr.lr_reductions == 10);  // one abandonment per stall window
  CHECK(tr.final_loss == 1.0);
  CHECK(tr.final_lr == doctest::Approx(cfg.lr_init * 1e-10).epsilon(1e-12));
}

TEST_CASE("single-task training matches the sparsest interpolant") {
  const auto inst = sparse_instance();
  const auto spec = ParadigmSpec::diag_defaults(Paradigm::STL, 3);
  const auto out = run_stl_diag(inst.main, spec);
  REQUIRE(out.train_trace.converged);
  REQUIRE(out.diag.has_value());
  check_trace_is_clean(out.train_trace, spec.finetune);

  const VectorXd beta = nets::effective_beta(*out.diag).row(0);
  penalties::InterpolationProblem prob;
  prob.main = {inst.main.X, inst.main.y.col(0)};
  prob.penalty = penalties::PenaltyId::l1;
  const auto sol = penalties::min_penalty_interpolant(prob);

  CHECK((beta - sol.beta_main).norm() / sol.beta_main.norm() < 1e-3);
  CHECK(rel_diff(beta.lpNorm<1>(), sol.penalty_value) < 1e-3);
}

TEST_CASE("joint training matches the minimum group-penalty interpolant") {
  const auto inst = sparse_instance();
  const auto spec = ParadigmSpec::diag_defaults(Paradigm::MTL, 3);
  const auto out = run_mtl_diag(inst.aux, inst.main, spec);
  REQUIRE(out.train_trace.converged);
  REQUIRE(out.diag.has_value());

  const MatrixXd beta = nets::effective_beta(*out.diag);
  penalties::InterpolationProblem prob;
  prob.main = {inst.main.X, inst.main.y.col(0)};
  prob.aux = penalties::TaskConstraint{inst.aux.X, inst.aux.y.col(0)};
  prob.penalty = penalties::PenaltyId::group_lasso;
  const auto sol = penalties::min_penalty_interpolant(prob);

  const double err_sq = (beta.row(0).transpose() - sol.beta_aux).squaredNorm() +
                        (beta.row(1).transpose() - sol.beta_main).squaredNorm();
  const double norm_sq = sol.beta_aux.squaredNorm() + sol.beta_main.squaredNorm();
  CHECK(std::sqrt(err_sq / norm_sq) < 1e-3);
  CHECK(rel_diff(penalties::group_lasso(beta.row(0), beta.row(1)), sol.penalty_value) <
        1e-3);

  // The returned model is the main-task head.
  const VectorXd pred = out.model(inst.main.X);
  CHECK((pred - inst.main.X * beta.row(1).transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("joint training on identical tasks yields identical heads") {
  const auto inst = sparse_instance();
  const auto ds = tasks::sample_dataset(inst.teacher.beta_main, 12, tasks::TaskId::aux, 55);
  auto as_main = ds;
  as_main.task_id = tasks::TaskId::main;
  const auto out =
      run_mtl_diag(ds, as_main, ParadigmSpec::diag_defaults(Paradigm::MTL, 3));
  REQUIRE(out.train_trace.converged);
  const MatrixXd beta = nets::effective_beta(*out.diag);
  // Both heads see bitwise-identical data from a symmetric start, so the
  // deterministic trainer keeps them bitwise equal throughout.
  CHECK(beta.row(0) == beta.row(1));
}

TEST_CASE("sequential training matches the scale-adapted interpolant") {
  const auto inst = sparse_instance();
  const auto spec = ParadigmSpec::diag_defaults(Paradigm::PTFT, 3);
  const auto out = run_ptft_diag(inst.aux, inst.main, spec);
  REQUIRE(!out.aborted);
  REQUIRE(out.train_trace.converged);
  REQUIRE(out.diag.has_value());
  REQUIRE(out.diag_pretrained.has_value());

  const VectorXd beta = nets::effective_beta(*out.diag).row(0);
  const VectorXd beta_pre = nets::effective_beta(*out.diag_pretrained).row(0);
  penalties::InterpolationProblem prob;
  prob.main = {inst.main.X, inst.main.y.col(0)};
  prob.penalty = penalties::PenaltyId::q_norm;
  prob.aux_coefficients = beta_pre;
  prob.gamma = spec.gamma;
  const auto sol = penalties::min_penalty_interpolant(prob);

  CHECK((beta - sol.beta_main).norm() / sol.beta_main.norm() < 1e-3);
  CHECK(rel_diff(penalties::q_norm(beta, beta_pre, spec.gamma), sol.penalty_value) <
        1e-3);

  // The auxiliary support covers the main support here, so finetuning also
  // generalizes: the learned function is close to the teacher everywhere.
  const double gen = tasks::generalization_loss(
      out.model, tasks::predictor(inst.teacher.beta_main), 20);
  CHECK(gen < 1e-7);

  // The cached pretraining stage is reproducible on its own.
  const auto pre = pretrain_diag(inst.aux, spec);
  CHECK(nets::effective_beta(pre.net).row(0) == beta_pre.transpose());
}

TEST_CASE("finetuning recipe: rescaled summed pathways and a zero start") {
  const auto inst = sparse_instance();
  auto spec = ParadigmSpec::diag_defaults(Paradigm::PTFT, 3);
  const auto pre = pretrain_diag(inst.aux, spec);
  REQUIRE(pre.trace.converged);

  // A zero-step finetune exposes the recipe state itself.
  spec.rescale_factor = 2.5;
  spec.finetune.max_steps = 0;
  const auto ft = finetune_ptft_diag(pre.net, inst.main, spec);
  const auto& net = *ft.diag;
  const VectorXd summed = 2.5 * (pre.net.w_plus + pre.net.w_minus);

  CHECK(net.w_plus == summed);
  CHECK(net.w_minus == summed);
  CHECK((net.v_plus.array() == spec.gamma).all());
  CHECK((net.v_minus.array() == spec.gamma).all());
  CHECK((nets::effective_beta(net).array() == 0.0).all());

  // Zero function start: the recorded initial loss is exactly the target power.
  const double y2 = inst.main.y.col(0).squaredNorm() / double(inst.main.n());
  CHECK(ft.train_trace.samples.front().loss == y2);
  CHECK(ft.train_trace.steps == 0);
  CHECK(!ft.train_trace.converged);

  SUBCASE("rescale zero erases pretraining entirely") {
    auto spec0 = ParadigmSpec::diag_defaults(Paradigm::PTFT, 3);
    spec0.rescale_factor = 0.0;
    const auto erased = finetune_ptft_diag(pre.net, inst.main, spec0);
    nets::DiagonalLinearNet scratch;
    scratch.w_plus = VectorXd::Zero(20);
    scratch.w_minus = VectorXd::Zero(20);
    scratch.v_plus = MatrixXd::Constant(1, 20, spec0.gamma);
    scratch.v_minus = MatrixXd::Constant(1, 20, spec0.gamma);
    train_to_convergence(scratch, inst.main.X, inst.main.y, nullptr, spec0.finetune);
    CHECK(nets::effective_beta(*erased.diag) == nets::effective_beta(scratch));
  }

  SUBCASE("invalid recipes are rejected") {
    auto bad = ParadigmSpec::diag_defaults(Paradigm::PTFT, 3);
    bad.rescale_factor = -1.0;
    CHECK_THROWS_AS(finetune_ptft_diag(pre.net, inst.main, bad), ConfigError);
    nets::DiagonalLinearNet two = nets::init_diag(20, 2, 1e-6, 0);
    CHECK_THROWS_AS(finetune_ptft_diag(two, inst.main, spec), DimensionError);
  }
}

TEST_CASE("relu finetuning recipe: hidden rescale and readout redraw") {
  const nets::ReluNet pre = nets::init_relu(5, 4096, 1, 0.5, 0.3, 77);
  const auto tiny = tasks::sample_dataset(VectorXd::Ones(5), 6, tasks::TaskId::main, 9);
  auto spec = ParadigmSpec::relu_defaults(Paradigm::PTFT, 41);
  spec.finetune.max_steps = 0;
  spec.rescale_factor = 3.0;

  const auto a = finetune_ptft_relu(pre, tiny, spec);
  CHECK(a.relu->hidden == 3.0 * pre.hidden);

  // Same seed redraws the same readout; another seed differs.
  const auto b = finetune_ptft_relu(pre, tiny, spec);
  CHECK(a.relu->readout == b.relu->readout);
  auto other = spec;
  other.seed = 42;
  const auto c = finetune_ptft_relu(pre, tiny, other);
  CHECK(a.relu->readout != c.relu->readout);

  // The redraw is centered with variance readout_reinit_coeff * sqrt(2/H).
  const VectorXd r = a.relu->readout.row(0);
  const double var_target = spec.readout_reinit_coeff * std::sqrt(2.0 / 4096.0);
  const double sample_var = (r.array() - r.mean()).square().sum() / double(r.size() - 1);
  CHECK(rel_diff(sample_var, var_target) < 0.15);
  CHECK(std::abs(r.mean()) < 3.0 * std::sqrt(var_target / 4096.0));
}

TEST_CASE("training is deterministic run to run") {
  tasks::ReluTeacherSpec rspec;
  rspec.D = 6;
  rspec.units_aux = 3;
  rspec.units_main = 2;
  rspec.n_shared = 0;
  rspec.seed = 1;
  const auto teacher = tasks::gen_relu_teacher(rspec);
  const auto ds = tasks::sample_dataset(teacher.main, 48, tasks::TaskId::main, 7);
  auto spec = ParadigmSpec::relu_defaults(Paradigm::STL, 5);
  spec.hidden_units = 64;
  const auto r1 = run_stl_relu(ds, spec);
  const auto r2 = run_stl_relu(ds, spec);
  REQUIRE(r1.train_trace.converged);
  CHECK(r1.relu->hidden == r2.relu->hidden);
  CHECK(r1.relu->readout == r2.relu->readout);
  CHECK(r1.train_trace.final_loss == r2.train_trace.final_loss);
  check_trace_is_clean(r1.train_trace, spec.finetune);
}

TEST_CASE("large hidden rescale pins finetuning to the pretrained features") {
  tasks::ReluTeacherSpec rspec;
  rspec.D = 6;
  rspec.units_aux = 3;
  rspec.units_main = 2;
  rspec.n_shared = 2;
  rspec.correlation = 1.0;
  rspec.seed = 11;
  const auto teacher = tasks::gen_relu_teacher(rspec);
  const auto aux = tasks::sample_dataset(teacher.aux, 48, tasks::TaskId::aux, 61);
  const auto main_ds = tasks::sample_dataset(teacher.main, 24, tasks::TaskId::main, 62);

  auto spec = ParadigmSpec::relu_defaults(Paradigm::PTFT, 2);
  spec.hidden_units = 64;
  spec.rescale_factor = 10.0;
  const auto out = run_ptft_relu(aux, main_ds, spec);
  REQUIRE(!out.aborted);
  REQUIRE(out.train_trace.converged);

  // Oversized hidden weights put finetuning in the lazy regime: hidden
  // directions barely move, so pre/post direction cosines stay near one.
  double acc = 0.0;
  int cnt = 0;
  for (Eigen::Index h = 0; h < out.relu->units(); ++h) {
    const double n_pre = out.relu_pretrained->hidden.row(h).norm();
    const double n_post = out.relu->hidden.row(h).norm();
    if (n_pre < 1e-12 || n_post < 1e-12) continue;
    acc += out.relu_pretrained->hidden.row(h).dot(out.relu->hidden.row(h)) /
           (n_pre * n_post);
    ++cnt;
  }
  REQUIRE(cnt > 0);
  CHECK(acc / double(cnt) > 0.99);
}

TEST_CASE("readout-only probes solve the frozen-feature least squares") {
  SUBCASE("diagonal features match an independent pseudoinverse") {
    nets::DiagonalLinearNet pre;
    pre.w_plus = VectorXd::LinSpaced(6, 1.0, 2.0);
    pre.w_minus = VectorXd::LinSpaced(6, -1.5, 0.8);
    pre.v_plus = MatrixXd::Zero(1, 6);
    pre.v_minus = MatrixXd::Zero(1, 6);
    const auto ds = tasks::sample_dataset(VectorXd::Unit(6, 2), 4, tasks::TaskId::main, 31);
    const auto out = linear_probe_diag(pre, ds);

    CHECK((out.model(ds.X) - ds.y.col(0)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(out.train_trace.converged);
    CHECK(!out.flagged);
    CHECK(out.diag->w_plus == pre.w_plus);   // hidden weights stay frozen
    CHECK(out.diag->w_minus == pre.w_minus);

    MatrixXd F(4, 12);
    F.leftCols(6) = ds.X.array().rowwise() * pre.w_plus.transpose().array();
    F.rightCols(6) = -(ds.X.array().rowwise() * pre.w_minus.transpose().array());
    Eigen::JacobiSVD<MatrixXd> svd(F, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const VectorXd coeffs = svd.solve(ds.y.col(0));
    VectorXd got(12);
    got.head(6) = out.diag->v_plus.row(0);
    got.tail(6) = out.diag->v_minus.row(0);
    CHECK((got - coeffs).cwiseAbs().maxCoeff() < 1e-10);
  }

  SUBCASE("duplicated pathways are reported as rank-deficient") {
    nets::DiagonalLinearNet dup;
    dup.w_plus = VectorXd::LinSpaced(3, 0.5, 1.5);
    dup.w_minus = -dup.w_plus;  // makes both feature halves identical
    dup.v_plus = MatrixXd::Zero(1, 3);
    dup.v_minus = MatrixXd::Zero(1, 3);
    const auto ds = tasks::sample_dataset(VectorXd::Ones(3), 8, tasks::TaskId::main, 17);
    const auto out = linear_probe_diag(dup, ds);
    CHECK(out.flagged);
    // Targets lie in the feature span, so the fit is still exact.
    CHECK((out.model(ds.X) - ds.y.col(0)).cwiseAbs().maxCoeff() < 1e-10);
  }

  SUBCASE("relu probe fits through frozen activations") {
    const nets::ReluNet pre = nets::init_relu(6, 50, 1, 0.6, 0.1, 21);
    const auto ds = tasks::sample_dataset(VectorXd::Ones(6), 20, tasks::TaskId::main, 23);
    const auto out = linear_probe_relu(pre, ds);
    CHECK((out.model(ds.X) - ds.y.col(0)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(!out.flagged);
    CHECK(out.relu->hidden == pre.hidden);
  }
}

TEST_CASE("tangent-feature baseline: linearized fit at the given point") {
  const nets::ReluNet at = nets::init_relu(4, 30, 1, 0.7, 0.05, 3);
  const auto ds = tasks::sample_dataset(VectorXd::Unit(4, 1) * 2.0, 10, tasks::TaskId::main, 13);
  const auto out = ntk_baseline_relu(at, ds);

  CHECK((out.model(ds.X) - ds.y.col(0)).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(out.train_trace.converged);
  CHECK(!out.flagged);

  // Independent reconstruction: the model must equal the base function plus
  // the minimum-norm tangent correction, evaluated at fresh points too.
  auto tangent = [&](const MatrixXd& Xq) {
    const Eigen::Index H = at.units(), D = at.dim();
    const MatrixXd pre = Xq * at.hidden.transpose();
    MatrixXd phi(Xq.rows(), H + H * D);
    phi.leftCols(H) = pre.cwiseMax(0.0);
    for (Eigen::Index h = 0; h < H; ++h) {
      const Eigen::ArrayXd gate =
          (pre.col(h).array() > 0.0).cast<double>() * at.readout(0, h);
      phi.middleCols(H + h * D, D) = Xq.array().colwise() * gate;
    }
    return phi;
  };
  const VectorXd f0 = nets::relu_forward(at, ds.X).col(0);
  const VectorXd delta =
      tangent(ds.X).completeOrthogonalDecomposition().solve(ds.y.col(0) - f0);
  const MatrixXd fresh = tasks::sample_sphere(25, 4, 99);
  const VectorXd want = nets::relu_forward(at, fresh).col(0) + tangent(fresh) * delta;
  CHECK((out.model(fresh) - want).cwiseAbs().maxCoeff() < 1e-10);

  SUBCASE("a single sample is interpolated exactly") {
    const auto one = tasks::sample_dataset(VectorXd::Unit(4, 0), 1, tasks::TaskId::main, 5);
    const auto o1 = ntk_baseline_relu(at, one);
    CHECK((o1.model(one.X) - one.y.col(0)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("multi-output points are rejected") {
    const nets::ReluNet two = nets::init_relu(4, 8, 2, 0.7, 0.05, 3);
    CHECK_THROWS_AS(ntk_baseline_relu(two, ds), DimensionError);
  }
}

TEST_CASE("a pipeline whose pretraining cannot converge is marked aborted") {
  const auto inst = sparse_instance();
  auto spec = ParadigmSpec::diag_defaults(Paradigm::PTFT, 3);
  spec.pretrain.max_steps = 5;
  const auto out = run_ptft_diag(inst.aux, inst.main, spec);
  CHECK(out.aborted);
  CHECK(!out.pretrain_trace.converged);
  CHECK(out.diag_pretrained.has_value());
  CHECK(!out.diag.has_value());
  // The reported model is the (barely trained) pretrained net: still tiny.
  CHECK(out.model(inst.main.X).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_SUITE_END();
