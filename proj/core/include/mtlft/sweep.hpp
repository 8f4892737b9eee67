#pragma once

// Seeded sweep execution with crash-safe incremental persistence.
//
// A sweep runs every (arm × n_main × seed) cell of an ExperimentConfig. Rows
// append to a journal file as cells finish (one flushed line per cell), so an
// interrupted run loses at most the cell in flight; resuming skips journaled
// cells by run id. The final table is the journal's rows in canonical order
// (config arm order, then n_main, then seed), written atomically. Two runs of
// the same config produce byte-identical tables regardless of interruptions
// or thread count.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mtlft/config.hpp"

namespace mtlft::sweep {

// One result row. Fixed CSV schema, in this exact column order:
//   run_id, figure_id, paradigm, seed, D, H, k_aux, k_main, n_overlap,
//   correlation, magnitude, gamma, rescale, n_aux, n_main, steps, final_lr,
//   train_mse, gen_loss, penalty_id, penalty_value, pr_pre, pr_post, ensd,
//   cka, inertia_K, alignment
// Numeric fields that do not apply to a cell hold NaN (serialized "nan");
// penalty_id is empty when no penalty was evaluated. H is 0 for diagonal
// students. A cell whose pretraining failed to converge records NaN losses.
struct RunRecord {
  std::string run_id;     // "<confighash8>:<arm label>:n<n_main>:s<seed>"
  std::string figure_id;
  std::string paradigm;
  std::uint64_t seed = 0;
  Eigen::Index D = 0;
  Eigen::Index H = 0;
  Eigen::Index k_aux = 0;
  Eigen::Index k_main = 0;
  Eigen::Index n_overlap = 0;
  double correlation = 0.0;
  double magnitude = 0.0;
  double gamma = 0.0;
  double rescale = 0.0;
  Eigen::Index n_aux = 0;
  Eigen::Index n_main = 0;
  long steps = 0;
  double final_lr = 0.0;
  double train_mse = 0.0;
  double gen_loss = 0.0;
  std::string penalty_id;
  double penalty_value = 0.0;
  double pr_pre = 0.0;
  double pr_post = 0.0;
  double ensd = 0.0;
  double cka = 0.0;
  double inertia_K = 0.0;
  double alignment = 0.0;
};

std::string csv_header();
std::string to_csv_row(const RunRecord& row);       // doubles as %.17g
RunRecord record_from_csv_row(const std::string&);  // throws IoError

// Executes one cell: builds the per-seed teacher and datasets, runs the
// arm's paradigm, and measures the configured metrics. Deterministic.
RunRecord run_cell(const config::ArmConfig& arm, Eigen::Index n_aux,
                   Eigen::Index n_main, std::uint64_t seed,
                   const std::string& run_id, const std::string& figure_id);

struct SweepOptions {
  std::filesystem::path out_dir = ".";
  int threads = 1;      // <=0: all hardware threads
  bool resume = false;  // reuse journaled rows from a previous run
};

struct SweepResult {
  std::vector<RunRecord> rows;  // canonical order
  std::filesystem::path table_path;
  std::filesystem::path curves_path;
  std::filesystem::path journal_path;
  long computed = 0;
  long skipped = 0;  // journaled cells reused by resume
};

// Runs all cells and writes <name>.csv (final table), <name>.curves.csv
// (per-arm per-n generalization-loss mean, std, and mean ± 2·std bands over
// seeds), and <name>.journal.csv (incremental log). A journal written by a
// different config (hash mismatch) is discarded unless it is the one being
// resumed, in which case stale journals also start fresh.
SweepResult run_sweep(const config::ExperimentConfig& cfg, const SweepOptions& opts);

// Seed-mean of `metric` ("gen_loss", "penalty_value", "pr_post", ...) for one
// arm at one n_main; NaN rows are excluded. Returns NaN when nothing matches.
double curve_mean(const std::vector<RunRecord>& rows, const std::string& label,
                  Eigen::Index n_main, const std::string& metric = "gen_loss");

}  // namespace mtlft::sweep
