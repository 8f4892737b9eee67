#pragma once

// Canned experiment instances ("figures") with machine-checkable ordering
// postconditions. Each preset is either a training sweep (an ExperimentConfig
// plus curve checks on the seed-mean results) or an analytic penalty-curve
// tabulation (order / feature-dependence elasticities over an auxiliary-scale
// grid, with endpoint and conservation checks).
//
// Desk-scale presets finish on a laptop core; full-scale widens grids, adds
// seeds, and restores the costlier instance sizes.

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "mtlft/config.hpp"
#include "mtlft/penalties.hpp"
#include "mtlft/sweep.hpp"

namespace mtlft::presets {

// One postcondition on seed-mean curves. With hi_label set the check
// compares two curves at each listed n: the gap is
//   (mean(hi)*hi_scale - mean(lo)*lo_scale) / (mean(hi)*hi_scale)
// or, when absolute_gap is set, the plain scaled difference; it must satisfy
// gap_at_least <= gap < gap_below (plain "lo below hi" checks use
// gap_at_least = 0). The scale factors normalize curves measured against
// teachers of different output variance. With hi_label empty the check is
// absolute on mean(lo)*lo_scale: at_least <= value <= at_most (NaN bound:
// unchecked). Missing curves fail.
struct CurveCheck {
  std::string description;
  std::string metric = "gen_loss";
  std::string lo_label;
  std::string hi_label;
  std::vector<Eigen::Index> at_n;
  double lo_scale = 1.0;
  double hi_scale = 1.0;
  bool absolute_gap = false;
  double gap_at_least = -std::numeric_limits<double>::infinity();
  double gap_below = std::numeric_limits<double>::infinity();
  double at_least = std::numeric_limits<double>::quiet_NaN();
  double at_most = std::numeric_limits<double>::quiet_NaN();
};

struct CheckOutcome {
  std::string description;
  Eigen::Index n_main = 0;  // 0 for analytic checks
  double observed = 0.0;    // rel_gap, mean value, or analytic quantity
  bool passed = false;
};

// One analytic curve: elasticities of a two-task penalty at m_main = 1 as the
// auxiliary scale sweeps a log grid.
struct AnalyticCurve {
  std::string label;
  penalties::PenaltyId id = penalties::PenaltyId::group_lasso;
  double gamma = 0.0;  // q_norm / relu_ft readout scale
  double rho = 1.0;    // relu_ft direction cosine
};

struct Preset {
  std::string figure_id;
  std::string title;
  bool analytic = false;

  config::ExperimentConfig config;  // sweep presets

  std::vector<AnalyticCurve> curves;  // analytic presets
  std::vector<double> aux_scales;
  double m_main = 1.0;

  std::vector<CurveCheck> checks;  // evaluated on sweep output
};

std::vector<std::string> preset_ids();
bool is_preset(const std::string& figure_id);

// Throws ConfigError for unknown ids.
Preset preset(const std::string& figure_id, bool full_scale = false);

// Evaluates every check against sweep rows (one outcome per check per n).
std::vector<CheckOutcome> evaluate_checks(const Preset& preset,
                                          const std::vector<sweep::RunRecord>& rows);

struct PresetResult {
  std::vector<CheckOutcome> checks;
  sweep::SweepResult sweep;          // sweep presets
  std::filesystem::path table_path;  // analytic curve table, or the sweep table
  bool all_passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }
};

// Runs the preset end to end: sweeps (or tabulates) into opts.out_dir, then
// evaluates the postconditions. Analytic presets check that the order
// elasticity climbs from the sparse limit (~1) to the quadratic limit (~2)
// across the grid and that order + feature dependence - 1 stays below 1e-9.
PresetResult run_preset(const Preset& preset, const sweep::SweepOptions& opts);

}  // namespace mtlft::presets
