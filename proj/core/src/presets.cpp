#include "mtlft/presets.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "mtlft/errors.hpp"
#include "mtlft/nets.hpp"

namespace mtlft::presets {

namespace {

using config::ArmConfig;
using config::ExperimentConfig;
using config::TeacherConfig;
using config::TeacherKind;
using training::Paradigm;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::uint64_t> seed_list(int count) {
  std::vector<std::uint64_t> s(count);
  for (int i = 0; i < count; ++i) s[i] = static_cast<std::uint64_t>(i);
  return s;
}

std::vector<Eigen::Index> pow2_grid(Eigen::Index lo, Eigen::Index hi) {
  std::vector<Eigen::Index> g;
  for (Eigen::Index n = lo; n <= hi; n *= 2) g.push_back(n);
  return g;
}

std::vector<double> log_grid(double lo, double hi, int points) {
  std::vector<double> g(points);
  const double a = std::log10(lo), b = std::log10(hi);
  for (int i = 0; i < points; ++i)
    g[i] = std::pow(10.0, a + (b - a) * i / (points - 1));
  return g;
}

TeacherConfig diag_teacher(Eigen::Index D, Eigen::Index k_aux, Eigen::Index k_main,
                           Eigen::Index overlap) {
  TeacherConfig t;
  t.kind = TeacherKind::diag;
  t.D = D;
  t.k_aux = k_aux;
  t.k_main = k_main;
  t.n_overlap = overlap;
  return t;
}

TeacherConfig relu_teacher(Eigen::Index units_aux, Eigen::Index units_main,
                           Eigen::Index shared, double correlation, double magnitude) {
  TeacherConfig t;
  t.kind = TeacherKind::relu;
  t.D = 15;
  t.k_aux = units_aux;
  t.k_main = units_main;
  t.n_overlap = shared;
  t.correlation = correlation;
  t.magnitude = magnitude;
  return t;
}

ArmConfig diag_arm(const std::string& label, const TeacherConfig& teacher,
                   Paradigm paradigm, double rescale = 1.0) {
  ArmConfig a;
  a.label = label;
  a.teacher = teacher;
  a.paradigm = paradigm;
  a.rescale_factor = rescale;
  return a;
}

// ReLU students start at init_frac of the conventional scales: small enough
// to learn features instead of interpolating lazily, large enough to train
// in seconds at desk sizes.
ArmConfig relu_arm(const std::string& label, const TeacherConfig& teacher,
                   Paradigm paradigm, Eigen::Index H, double init_frac,
                   double rescale = 1.0) {
  ArmConfig a;
  a.label = label;
  a.teacher = teacher;
  a.paradigm = paradigm;
  a.hidden_units = H;
  a.hidden_scale = init_frac * nets::default_hidden_scale(teacher.D);
  a.readout_scale = init_frac * nets::default_readout_scale(H);
  a.rescale_factor = rescale;
  return a;
}

CurveCheck below(const std::string& desc, const std::string& lo, const std::string& hi,
                 std::vector<Eigen::Index> at_n) {
  CurveCheck c;
  c.description = desc;
  c.lo_label = lo;
  c.hi_label = hi;
  c.at_n = std::move(at_n);
  c.gap_at_least = 0.0;
  return c;
}

CurveCheck not_below(const std::string& desc, const std::string& lo,
                     const std::string& hi, std::vector<Eigen::Index> at_n) {
  CurveCheck c;
  c.description = desc;
  c.lo_label = lo;
  c.hi_label = hi;
  c.at_n = std::move(at_n);
  c.gap_below = 0.0;
  return c;
}

CurveCheck gap_at_least(const std::string& desc, const std::string& lo,
                        const std::string& hi, std::vector<Eigen::Index> at_n,
                        double gap) {
  CurveCheck c;
  c.description = desc;
  c.lo_label = lo;
  c.hi_label = hi;
  c.at_n = std::move(at_n);
  c.gap_at_least = gap;
  return c;
}

CurveCheck gap_below(const std::string& desc, const std::string& lo,
                     const std::string& hi, std::vector<Eigen::Index> at_n,
                     double gap) {
  CurveCheck c;
  c.description = desc;
  c.lo_label = lo;
  c.hi_label = hi;
  c.at_n = std::move(at_n);
  c.gap_below = gap;
  return c;
}

CurveCheck value_at_most(const std::string& desc, const std::string& metric,
                         const std::string& label, std::vector<Eigen::Index> at_n,
                         double bound) {
  CurveCheck c;
  c.description = desc;
  c.metric = metric;
  c.lo_label = label;
  c.at_n = std::move(at_n);
  c.at_most = bound;
  return c;
}

CurveCheck value_at_least(const std::string& desc, const std::string& metric,
                          const std::string& label, std::vector<Eigen::Index> at_n,
                          double bound) {
  CurveCheck c;
  c.description = desc;
  c.metric = metric;
  c.lo_label = label;
  c.at_n = std::move(at_n);
  c.at_least = bound;
  return c;
}

// --- figure instances -------------------------------------------------------

Preset fig2a(bool full) {
  Preset p;
  p.figure_id = "fig2a";
  const Eigen::Index D = full ? 1000 : 100;
  p.title = "diagonal students, disjoint supports: sparser main tasks win";
  p.config.name = p.figure_id;
  p.config.figure_id = p.figure_id;
  p.config.n_aux = full ? 1024 : 256;
  p.config.n_main_grid = pow2_grid(8, full ? 512 : 128);
  p.config.seeds = seed_list(full ? 10 : 5);
  for (const Eigen::Index k : {5, 20}) {
    const TeacherConfig t = diag_teacher(D, k, k, 0);
    const std::string kk = std::to_string(k);
    p.config.arms.push_back(diag_arm("stl-k" + kk, t, Paradigm::STL));
    p.config.arms.push_back(diag_arm("mtl-k" + kk, t, Paradigm::MTL));
    p.config.arms.push_back(diag_arm("ptft-k" + kk, t, Paradigm::PTFT));
  }
  const std::vector<Eigen::Index> at{8, 16, 32, 64, 128};
  for (const std::string paradigm : {"stl", "mtl", "ptft"})
    p.checks.push_back(below(paradigm + ": k=5 teacher below k=20 teacher",
                             paradigm + "-k5", paradigm + "-k20", at));
  return p;
}

Preset fig2b(bool full) {
  Preset p;
  p.figure_id = "fig2b";
  p.title = "relu students, distinct teacher units: fewer main units win";
  p.config.name = p.figure_id;
  p.config.figure_id = p.figure_id;
  p.config.n_aux = full ? 1024 : 256;
  p.config.n_main_grid = full ? pow2_grid(8, 256) : pow2_grid(16, 64);
  p.config.seeds = seed_list(full ? 10 : 5);
  const Eigen::Index H = full ? 1000 : 200;
  for (const Eigen::Index m : {2, 6}) {
    const TeacherConfig t = relu_teacher(6, m, 0, 1.0, 1.0);
    const std::string mm = std::to_string(m);
    p.config.arms.push_back(relu_arm("stl-m" + mm, t, Paradigm::STL, H, 0.1));
    p.config.arms.push_back(relu_arm("mtl-m" + mm, t, Paradigm::MTL, H, 0.1));
    p.config.arms.push_back(relu_arm("ptft-m" + mm, t, Paradigm::PTFT, H, 0.1));
  }
  const std::vector<Eigen::Index> at{16, 32, 64};
  for (const std::string paradigm : {"stl", "mtl", "ptft"})
    p.checks.push_back(below(paradigm + ": 2-unit teacher below 6-unit teacher",
                             paradigm + "-m2", paradigm + "-m6", at));
  return p;
}

Preset fig2c(bool full) {
  Preset p;
  p.figure_id = "fig2c";
  const Eigen::Index D = full ? 1000 : 100;
  p.title = "diagonal students, identical supports: auxiliary data helps";
  p.config.name = p.figure_id;
  p.config.figure_id = p.figure_id;
  p.config.n_aux = full ? 1024 : 256;
  p.config.n_main_grid = pow2_grid(8, full ? 512 : 128);
  p.config.seeds = seed_list(full ? 10 : 5);
  const TeacherConfig t = diag_teacher(D, 20, 20, 20);
  p.config.arms.push_back(diag_arm("stl", t, Paradigm::STL));
  p.config.arms.push_back(diag_arm("mtl", t, Paradigm::MTL));
  p.config.arms.push_back(diag_arm("ptft", t, Paradigm::PTFT));
  const std::vector<Eigen::Index> at{16, 32, 64};
  p.checks.push_back(below("joint training below single-task", "mtl", "stl", at));
  p.checks.push_back(below("finetuning below single-task", "ptft", "stl", at));
  return p;
}

Preset fig2d(bool full) {
  Preset p;
  p.figure_id = "fig2d";
  p.title = "relu students, identical teacher units: auxiliary data helps";
  p.config.name = p.figure_id;
  p.config.figure_id = p.figure_id;
  p.config.n_aux = full ? 1024 : 256;
  p.config.n_main_grid = full ? pow2_grid(8, 256) : pow2_grid(16, 64);
  p.config.seeds = seed_list(full ? 10 : 5);
  const Eigen::Index H = full ? 1000 : 200;
  const TeacherConfig t = relu_teacher(6, 6, 6, 1.0, 1.0);
  p.config.arms.push_back(relu_arm("stl", t, Paradigm::STL, H, 0.1));
  p.config.arms.push_back(relu_arm("mtl", t, Paradigm::MTL, H, 0.1));
  p.config.arms.push_back(relu_arm("ptft", t, Paradigm::PTFT, H, 0.1));
  const std::vector<Eigen::Index> at{16, 32, 64};
  p.checks.push_back(below("joint training below single-task", "mtl", "stl", at));
  p.checks.push_back(below("finetuning below single-task", "ptft", "stl", at));
  return p;
}

Preset fig2e(bool full) {
  Preset p;
  p.figure_id = "fig2e";
  const Eigen::Index D = full ? 1000 : 100;
  p.title = "diagonal students: benefit grows with support overlap";
  p.config.name = p.figure_id;
  p.config.figure_id = p.figure_id;
  p.config.n_aux = full ? 1024 : 256;
  p.config.n_main_grid = full ? pow2_grid(8, 256) : pow2_grid(16, 64);
  p.config.seeds = seed_list(full ? 10 : 5);
  p.config.arms.push_back(diag_arm("stl", diag_teacher(D, 5, 5, 0), Paradigm::STL));
  for (const Eigen::Index ov : {0, 2, 5}) {
    const TeacherConfig t = diag_teacher(D, 5, 5, ov);
    const std::string ss = std::to_string(ov);
    p.config.arms.push_back(diag_arm("mtl-ov" + ss, t, Paradigm::MTL));
    p.config.arms.push_back(diag_arm("ptft-ov" + ss, t, Paradigm::PTFT));
  }
  const std::vector<Eigen::Index> at{32, 64};
  p.checks.push_back(below("joint training: full overlap below disjoint",
                           "mtl-ov5", "mtl-ov0", at));
  p.checks.push_back(below("finetuning: full overlap below disjoint",
                           "ptft-ov5", "ptft-ov0", at));
  return p;
}

Preset fig2f(bool full) {
  Preset p;
  p.figure_id = "fig2f";
  p.title = "relu students: benefit grows with shared teacher units";
  p.config.name = p.figure_id;
  p.config.figure_id = p.figure_id;
  p.config.n_aux = full ? 1024 : 256;
  p.config.n_main_grid = full ? pow2_grid(16, 128) : std::vector<Eigen::Index>{32, 64};
  p.config.seeds = seed_list(full ? 10 : 5);
  const Eigen::Index H = full ? 1000 : 200;
  p.config.arms.push_back(relu_arm("stl", relu_teacher(6, 6, 0, 1.0, 1.0),
                                   Paradigm::STL, H, 0.1));
  for (const Eigen::Index sh : {0, 3, 6}) {
    const TeacherConfig t = relu_teacher(6, 6, sh, 1.0, 1.0);
    const std::string ss = std::to_string(sh);
    p.config.arms.push_back(relu_arm("mtl-sh" + ss, t, Paradigm::MTL, H, 0.1));
    p.config.arms.push_back(relu_arm("ptft-sh" + ss, t, Paradigm::PTFT, H, 0.1));
  }
  const std::vector<Eigen::Index> at{32, 64};
  p.checks.push_back(below("joint training: all units shared below none",
                           "mtl-sh6", "mtl-sh0", at));
  p.checks.push_back(below("finetuning: all units shared below none",
                           "ptft-sh6", "ptft-sh0", at));
  return p;
}

Preset fig3a(bool /*full*/) {
  Preset p;
  p.figure_id = "fig3a";
  p.title = "diagonal penalties: order and feature-dependence elasticities";
  p.analytic = true;
  p.aux_scales = log_grid(1e-4, 10.0, 36);
  p.curves.push_back({"group_lasso", penalties::PenaltyId::group_lasso, 0.0, 1.0});
  p.curves.push_back({"q_gamma1e-3", penalties::PenaltyId::q_norm, 1e-3, 1.0});
  p.curves.push_back({"q_gamma1e-1", penalties::PenaltyId::q_norm, 1e-1, 1.0});
  return p;
}

Preset fig3b(bool full) {
  Preset p;
  p.figure_id = "fig3b";
  const Eigen::Index D = full ? 1000 : 100;
  p.title = "diagonal students: nested subsets of a broad auxiliary task";
  p.config.name = p.figure_id;
  p.config.figure_id = p.figure_id;
  p.config.n_aux = full ? 1024 : 256;
  p.config.n_main_grid = full ? pow2_grid(8, 256) : pow2_grid(16, 64);
  p.config.seeds = seed_list(full ? 10 : 5);
  for (const Eigen::Index k : {5, 40}) {
    const TeacherConfig t = diag_teacher(D, 40, k, k);
    const std::string kk = std::to_string(k);
    p.config.arms.push_back(diag_arm("stl-k" + kk, t, Paradigm::STL));
    p.config.arms.push_back(diag_arm("mtl-k" + kk, t, Paradigm::MTL));
    p.config.arms.push_back(diag_arm("ptft-k" + kk, t, Paradigm::PTFT));
  }
  const std::vector<Eigen::Index> at{32, 64};
  p.checks.push_back(below("full reuse: finetuning below single-task at k=40",
                           "ptft-k40", "stl-k40", at));
  p.checks.push_back(below("full reuse: joint training below single-task at k=40",
                           "mtl-k40", "stl-k40", at));
  return p;
}

Preset fig3c(bool full) {
  Preset p;
  p.figure_id = "fig3c";
  const Eigen::Index D = full ? 1000 : 100;
  p.title = "diagonal students: down-rescaling restores subset selection";
  p.config.name = p.figure_id;
  p.config.figure_id = p.figure_id;
  p.config.n_aux = full ? 1024 : 256;
  p.config.n_main_grid = full ? pow2_grid(8, 256) : pow2_grid(16, 64);
  p.config.seeds = seed_list(full ? 10 : 5);
  for (const double r : {0.1, 1.0}) {
    const std::string rr = r == 0.1 ? "r0.1" : "r1.0";
    for (const Eigen::Index k : {5, 40}) {
      const TeacherConfig t = diag_teacher(D, 40, k, k);
      p.config.arms.push_back(
          diag_arm(rr + "-k" + std::to_string(k), t, Paradigm::PTFT, r));
    }
  }
  // The two teachers differ 8x in output variance (k/D each at unit
  // coefficients), so subset-selection gaps are measured in fractions of the
  // respective null-model loss: scale each curve by D/k before differencing.
  CurveCheck narrow;
  narrow.description = "rescale 0.1: k=5 at least 20 points below k=40";
  narrow.lo_label = "r0.1-k5";
  narrow.hi_label = "r0.1-k40";
  narrow.at_n = {32};
  narrow.lo_scale = static_cast<double>(D) / 5.0;
  narrow.hi_scale = static_cast<double>(D) / 40.0;
  narrow.absolute_gap = true;
  narrow.gap_at_least = 0.20;
  p.checks.push_back(narrow);
  CurveCheck flat = narrow;
  flat.description = "rescale 1.0: k=5 within 20 points of k=40";
  flat.lo_label = "r1.0-k5";
  flat.hi_label = "r1.0-k40";
  flat.gap_at_least = -std::numeric_limits<double>::infinity();
  flat.gap_below = 0.20;
  p.checks.push_back(flat);
  p.checks.push_back(below("nested subset: rescale 0.1 below rescale 1.0 at k=5",
                           "r0.1-k5", "r1.0-k5", {16, 32}));
  return p;
}

Preset fig3d(bool /*full*/) {
  Preset p;
  p.figure_id = "fig3d";
  p.title = "relu finetuning penalty: order and feature-dependence elasticities";
  p.analytic = true;
  p.aux_scales = log_grid(1e-4, 10.0, 36);
  p.curves.push_back({"joint", penalties::PenaltyId::group_lasso, 0.0, 1.0});
  p.curves.push_back({"finetune", penalties::PenaltyId::relu_ft, 1e-3, 1.0});
  return p;
}

Preset fig3e(bool full) {
  Preset p;
  p.figure_id = "fig3e";
  p.title = "relu students: finetuning selects a nested subset of units";
  p.config.name = p.figure_id;
  p.config.figure_id = p.figure_id;
  p.config.n_aux = full ? 1024 : 256;
  p.config.n_main_grid = full ? pow2_grid(16, 128) : pow2_grid(16, 64);
  p.config.seeds = seed_list(full ? 10 : 5);
  const Eigen::Index H = full ? 1000 : 200;
  const TeacherConfig t = relu_teacher(6, 2, 2, 1.0, 1.0);
  p.config.arms.push_back(relu_arm("stl", t, Paradigm::STL, H, 0.1));
  p.config.arms.push_back(relu_arm("mtl", t, Paradigm::MTL, H, 0.1));
  p.config.arms.push_back(relu_arm("ptft", t, Paradigm::PTFT, H, 0.1));
  const std::vector<Eigen::Index> at{32, 64};
  p.checks.push_back(
      below("finetuning below joint training on a nested subset", "ptft", "mtl", at));
  return p;
}

Preset fig3f(bool full) {
  Preset p;
  p.figure_id = "fig3f";
  p.title = "relu students: weight rescaling shifts the finetuning bias";
  p.config.name = p.figure_id;
  p.config.figure_id = p.figure_id;
  p.config.n_aux = full ? 1024 : 256;
  p.config.n_main_grid = full ? pow2_grid(16, 128) : pow2_grid(16, 64);
  p.config.seeds = seed_list(full ? 10 : 5);
  const Eigen::Index H = full ? 1000 : 200;
  const TeacherConfig t = relu_teacher(6, 2, 2, 1.0, 1.0);
  p.config.arms.push_back(relu_arm("ptft-r0.1", t, Paradigm::PTFT, H, 0.1, 0.1));
  p.config.arms.push_back(relu_arm("ptft-r1.0", t, Paradigm::PTFT, H, 0.1, 1.0));
  p.config.arms.push_back(relu_arm("ptft-r10", t, Paradigm::PTFT, H, 0.1, 10.0));
  const std::vector<Eigen::Index> at{32, 64};
  p.checks.push_back(below("moderate rescale below aggressive up-rescale",
                           "ptft-r1.0", "ptft-r10", at));
  return p;
}

Preset fig4a(bool full) {
  Preset p;
  p.figure_id = "fig4a";
  p.title = "relu students, imperfectly correlated units: finetuning is robust";
  p.config.name = p.figure_id;
  p.config.figure_id = p.figure_id;
  p.config.n_aux = full ? 1024 : 256;
  p.config.n_main_grid = full ? pow2_grid(16, 256) : pow2_grid(32, 128);
  p.config.seeds = seed_list(full ? 10 : 5);
  const Eigen::Index H = full ? 1000 : 200;
  const TeacherConfig t = relu_teacher(6, 6, 6, 0.9, 1.0);
  p.config.arms.push_back(relu_arm("stl", t, Paradigm::STL, H, 0.1));
  p.config.arms.push_back(relu_arm("mtl", t, Paradigm::MTL, H, 0.1));
  p.config.arms.push_back(relu_arm("ptft", t, Paradigm::PTFT, H, 0.1));
  p.checks.push_back(
      below("finetuning below single-task", "ptft", "stl", {32, 64, 128}));
  p.checks.push_back(below("joint training helps at small n", "mtl", "stl", {32}));
  p.checks.push_back(not_below("joint training stops helping at larger n", "mtl",
                               "stl", {64, 128}));
  return p;
}

Preset fig4b(bool full) {
  Preset p;
  p.figure_id = "fig4b";
  p.title = "relu students: transfer needs matching directions or magnitudes";
  p.config.name = p.figure_id;
  p.config.figure_id = p.figure_id;
  p.config.n_aux = full ? 1024 : 256;
  p.config.n_main_grid = full ? std::vector<Eigen::Index>{32, 64, 128}
                              : std::vector<Eigen::Index>{64};
  p.config.seeds = seed_list(full ? 10 : 5);
  const Eigen::Index H = full ? 1000 : 200;
  for (const double mag : {1.0, 4.0}) {
    const std::string mm = mag == 1.0 ? "m1" : "m4";
    p.config.arms.push_back(relu_arm("stl-" + mm, relu_teacher(6, 6, 6, 1.0, mag),
                                     Paradigm::STL, H, 0.1));
    for (const double corr : {0.5, 1.0}) {
      const std::string cc = corr == 0.5 ? "c05" : "c10";
      p.config.arms.push_back(relu_arm("ptft-" + cc + "-" + mm,
                                       relu_teacher(6, 6, 6, corr, mag),
                                       Paradigm::PTFT, H, 0.1));
    }
  }
  p.checks.push_back(below("identical directions transfer despite magnitude",
                           "ptft-c10-m4", "stl-m4", {64}));
  p.checks.push_back(below("identical magnitudes transfer despite direction",
                           "ptft-c05-m1", "stl-m1", {64}));
  p.checks.push_back(gap_below("mismatched directions and magnitudes: no gain",
                               "ptft-c05-m4", "stl-m4", {64}, 0.15));
  return p;
}

Preset s1(bool full) {
  Preset p;
  p.figure_id = "s1";
  const Eigen::Index D = full ? 1000 : 100;
  p.title = "diagonal students: solution penalties track support overlap";
  p.config.name = p.figure_id;
  p.config.figure_id = p.figure_id;
  p.config.n_aux = full ? 1024 : 256;
  p.config.n_main_grid = full ? std::vector<Eigen::Index>{16, 32, 64}
                              : std::vector<Eigen::Index>{32};
  p.config.seeds = seed_list(full ? 10 : 5);
  {
    ArmConfig stl = diag_arm("stl", diag_teacher(D, 5, 5, 0), Paradigm::STL);
    stl.want_penalty = true;
    p.config.arms.push_back(stl);
  }
  for (const Eigen::Index ov : {0, 2, 5}) {
    const TeacherConfig t = diag_teacher(D, 5, 5, ov);
    const std::string ss = std::to_string(ov);
    ArmConfig mtl = diag_arm("mtl-ov" + ss, t, Paradigm::MTL);
    mtl.want_penalty = true;
    ArmConfig ptft = diag_arm("ptft-ov" + ss, t, Paradigm::PTFT);
    ptft.want_penalty = true;
    p.config.arms.push_back(mtl);
    p.config.arms.push_back(ptft);
  }
  p.checks.push_back(below("joint training: overlap lowers the loss", "mtl-ov5",
                           "mtl-ov0", {32}));
  p.checks.push_back(below("finetuning: overlap lowers the loss", "ptft-ov5",
                           "ptft-ov0", {32}));
  CurveCheck cost = below("shared supports cost less under the group penalty",
                          "mtl-ov5", "mtl-ov0", {32});
  cost.metric = "penalty_value";
  p.checks.push_back(cost);
  return p;
}

Preset s2(bool full) {
  Preset p;
  p.figure_id = "s2";
  p.title = "relu students: finetuning beats its frozen and linearized baselines";
  p.config.name = p.figure_id;
  p.config.figure_id = p.figure_id;
  p.config.n_aux = full ? 1024 : 256;
  p.config.n_main_grid = full ? pow2_grid(16, 128) : std::vector<Eigen::Index>{32, 64};
  p.config.seeds = seed_list(full ? 5 : 3);
  const Eigen::Index H = full ? 1000 : 200;
  const TeacherConfig t = relu_teacher(6, 2, 2, 1.0, 1.0);
  p.config.arms.push_back(relu_arm("stl", t, Paradigm::STL, H, 0.1));
  p.config.arms.push_back(relu_arm("ptft", t, Paradigm::PTFT, H, 0.1));
  p.config.arms.push_back(relu_arm("probe", t, Paradigm::PTFT_LinearProbe, H, 0.1));
  p.config.arms.push_back(relu_arm("ntk", t, Paradigm::PTFT_NTK, H, 0.1));
  const std::vector<Eigen::Index> at{32, 64};
  p.checks.push_back(
      below("finetuning below its linearization", "ptft", "ntk", at));
  p.checks.push_back(
      below("finetuning below frozen features", "ptft", "probe", at));
  return p;
}

Preset s4(bool full) {
  Preset p;
  p.figure_id = "s4";
  p.title = "relu students recover teacher units: clustering diagnostics";
  p.config.name = p.figure_id;
  p.config.figure_id = p.figure_id;
  p.config.n_aux = 512;
  p.config.n_main_grid = {512};
  p.config.seeds = seed_list(full ? 5 : 3);
  const TeacherConfig t = relu_teacher(6, 6, 6, 1.0, 1.0);
  for (const Paradigm paradigm : {Paradigm::STL, Paradigm::MTL, Paradigm::PTFT}) {
    ArmConfig a = relu_arm(training::to_string(paradigm), t, paradigm, 32, 0.03);
    a.kmeans_K = 6;
    a.want_repr = true;
    a.pretrain_loss_threshold = 1e-6;
    a.finetune_loss_threshold = 1e-6;
    p.config.arms.push_back(a);
  }
  for (const std::string label : {"stl", "mtl", "ptft"}) {
    p.checks.push_back(value_at_most(
        label + ": six clusters explain the hidden directions", "inertia_K",
        label, {512}, 0.10));
    p.checks.push_back(value_at_least(
        label + ": cluster centers align with teacher units", "alignment",
        label, {512}, 0.95));
  }
  return p;
}

Preset build(const std::string& id, bool full) {
  if (id == "fig2a") return fig2a(full);
  if (id == "fig2b") return fig2b(full);
  if (id == "fig2c") return fig2c(full);
  if (id == "fig2d") return fig2d(full);
  if (id == "fig2e") return fig2e(full);
  if (id == "fig2f") return fig2f(full);
  if (id == "fig3a") return fig3a(full);
  if (id == "fig3b") return fig3b(full);
  if (id == "fig3c") return fig3c(full);
  if (id == "fig3d") return fig3d(full);
  if (id == "fig3e") return fig3e(full);
  if (id == "fig3f") return fig3f(full);
  if (id == "fig4a") return fig4a(full);
  if (id == "fig4b") return fig4b(full);
  if (id == "s1") return s1(full);
  if (id == "s2") return s2(full);
  if (id == "s4") return s4(full);
  throw ConfigError("unknown preset '" + id + "'");
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

PresetResult run_analytic(const Preset& p, const sweep::SweepOptions& opts) {
  PresetResult res;
  std::filesystem::create_directories(opts.out_dir);
  res.table_path = opts.out_dir / (p.figure_id + ".csv");
  const std::filesystem::path tmp = res.table_path.string() + ".tmp";
  std::ofstream out(tmp, std::ios::trunc);
  if (!out) throw IoError("cannot open " + tmp.string());
  out << "label,penalty_id,gamma,rho,m_main,m_aux,marginal,ell_order,"
         "feature_dependence,conservation_residual\n";
  for (const AnalyticCurve& curve : p.curves) {
    double ell_first = kNaN, ell_last = kNaN, worst_resid = 0.0;
    for (std::size_t i = 0; i < p.aux_scales.size(); ++i) {
      penalties::PenaltyPoint pt;
      pt.m_main = p.m_main;
      pt.m_aux = p.aux_scales[i];
      pt.gamma = curve.gamma;
      pt.rho = curve.rho;
      const auto el = penalties::elasticities(curve.id, pt);
      const double marginal = penalties::marginal_penalty(curve.id, pt);
      if (i == 0) ell_first = el.ell_order;
      if (i + 1 == p.aux_scales.size()) ell_last = el.ell_order;
      worst_resid = std::max(worst_resid, std::abs(el.conservation_residual()));
      out << curve.label << ',' << penalties::to_string(curve.id) << ','
          << fmt(curve.gamma) << ',' << fmt(curve.rho) << ',' << fmt(pt.m_main)
          << ',' << fmt(pt.m_aux) << ',' << fmt(marginal) << ','
          << fmt(el.ell_order) << ',' << fmt(el.feature_dependence) << ','
          << fmt(el.conservation_residual()) << '\n';
    }
    res.checks.push_back({curve.label + ": sparse-limit order near 1", 0,
                          ell_first, ell_first > 0.97 && ell_first < 1.30});
    res.checks.push_back({curve.label + ": reuse-limit order near 2", 0, ell_last,
                          ell_last > 1.60 && ell_last < 2.10});
    res.checks.push_back({curve.label + ": order + dependence - 1 below 1e-9", 0,
                          worst_resid, worst_resid < 1e-9});
  }
  out.close();
  std::filesystem::rename(tmp, res.table_path);
  return res;
}

}  // namespace

std::vector<std::string> preset_ids() {
  return {"fig2a", "fig2b", "fig2c", "fig2d", "fig2e", "fig2f", "fig3a", "fig3b",
          "fig3c", "fig3d", "fig3e", "fig3f", "fig4a", "fig4b", "s1", "s2", "s4"};
}

bool is_preset(const std::string& figure_id) {
  for (const auto& id : preset_ids())
    if (id == figure_id) return true;
  return false;
}

Preset preset(const std::string& figure_id, bool full_scale) {
  return build(figure_id, full_scale);
}

std::vector<CheckOutcome> evaluate_checks(const Preset& preset,
                                          const std::vector<sweep::RunRecord>& rows) {
  std::vector<CheckOutcome> out;
  for (const CurveCheck& c : preset.checks)
    for (const Eigen::Index n : c.at_n) {
      CheckOutcome o;
      o.description = c.description;
      o.n_main = n;
      const double lo =
          sweep::curve_mean(rows, c.lo_label, n, c.metric) * c.lo_scale;
      if (c.hi_label.empty()) {
        o.observed = lo;
        o.passed = std::isfinite(lo) &&
                   (std::isnan(c.at_least) || lo >= c.at_least) &&
                   (std::isnan(c.at_most) || lo <= c.at_most);
      } else {
        const double hi =
            sweep::curve_mean(rows, c.hi_label, n, c.metric) * c.hi_scale;
        const double gap = c.absolute_gap ? hi - lo : (hi - lo) / hi;
        o.observed = gap;
        o.passed = std::isfinite(gap) && gap >= c.gap_at_least && gap < c.gap_below;
      }
      out.push_back(o);
    }
  return out;
}

PresetResult run_preset(const Preset& preset, const sweep::SweepOptions& opts) {
  if (preset.analytic) return run_analytic(preset, opts);
  PresetResult res;
  res.sweep = sweep::run_sweep(preset.config, opts);
  res.table_path = res.sweep.table_path;
  res.checks = evaluate_checks(preset, res.sweep.rows);
  return res;
}

}  // namespace mtlft::presets
