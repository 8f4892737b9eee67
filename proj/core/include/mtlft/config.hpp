#pragma once

// Declarative experiment configurations: a teacher-student sweep is a list of
// arms (curves) crossed with a main-task sample grid and a seed list. Configs
// load from and save to JSON, validate with errors that name the offending
// keys, and hash to a stable identifier used for resume bookkeeping.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mtlft/errors.hpp"
#include "mtlft/penalties.hpp"
#include "mtlft/tasks.hpp"
#include "mtlft/training.hpp"

namespace mtlft::config {

// Deterministic stream splitting: derives an independent 64-bit seed from a
// base seed and a stream tag. Teachers, datasets, and student inits each draw
// from their own derived stream of the per-cell seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

enum class TeacherKind { diag, relu };
std::string to_string(TeacherKind kind);
TeacherKind teacher_kind_from_string(const std::string& name);

// Merged view of the two teacher families. For diagonal teachers k_aux /
// k_main / n_overlap are support sizes and correlation is ignored; for ReLU
// teachers they are unit counts / shared units and correlation is the cosine
// between paired units. magnitude scales the main-task coefficients.
struct TeacherConfig {
  TeacherKind kind = TeacherKind::diag;
  Eigen::Index D = 100;
  Eigen::Index k_aux = 5;
  Eigen::Index k_main = 5;
  Eigen::Index n_overlap = 5;
  double correlation = 1.0;
  double magnitude = 1.0;
  std::uint64_t seed_base = 0;  // per-seed teacher seed derives from this

  tasks::LinearTeacherSpec linear_spec(std::uint64_t run_seed) const;
  tasks::ReluTeacherSpec relu_spec(std::uint64_t run_seed) const;
};

// One curve of a figure: a paradigm run against a teacher. Optional knobs
// default to the paradigm defaults for the teacher kind; zeros mean "use the
// built-in default" exactly as in training::ParadigmSpec.
struct ArmConfig {
  std::string label;  // unique within the experiment; appears in run ids
  TeacherConfig teacher;
  training::Paradigm paradigm = training::Paradigm::STL;

  double gamma = 1e-3;
  double init_scale = 1e-6;         // diagonal students
  Eigen::Index hidden_units = 200;  // ReLU students
  double hidden_scale = 0.0;
  double readout_scale = 0.0;
  double readout_reinit_coeff = 1e-3;
  double rescale_factor = 1.0;

  // Train-loop overrides; 0 keeps the kind's defaults.
  double pretrain_loss_threshold = 0.0;
  double finetune_loss_threshold = 0.0;
  long pretrain_max_steps = 0;
  long finetune_max_steps = 0;

  // Measurements beyond generalization loss.
  bool want_penalty = false;   // solution penalty value (see sweep)
  Eigen::Index kmeans_K = 0;   // >0: cluster ReLU students, report inertia
  bool want_repr = false;      // probe-activation PR/ENSD/CKA (ReLU)

  training::ParadigmSpec paradigm_spec(std::uint64_t run_seed) const;
};

struct ExperimentConfig {
  std::string name;       // output file stem
  std::string figure_id;  // empty when not a figure preset
  Eigen::Index n_aux = 256;
  std::vector<Eigen::Index> n_main_grid;
  std::vector<std::uint64_t> seeds;
  std::vector<ArmConfig> arms;

  void validate() const;  // throws ConfigError naming offending keys
};

// JSON round-trip. from_json_text validates and reports unknown or malformed
// keys by path (e.g. "arms[2].rescale_factor").
ExperimentConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const ExperimentConfig& cfg);

ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg);

// Stable 64-bit FNV-1a hash of the canonical (key-sorted) JSON serialization,
// as 16 hex digits. Identical configs hash identically across runs and
// platforms; any semantic change to the config changes the hash.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace mtlft::config
