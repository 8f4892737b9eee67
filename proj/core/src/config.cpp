#include "mtlft/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace mtlft::config {

// Splitmix-style mixing keeps the teacher, dataset, and student streams
// decorrelated without coupling them to grid order.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

using nlohmann::json;

constexpr auto mix = derive_seed;

[[noreturn]] void bad_key(const std::string& path, const std::string& what) {
  throw ConfigError("config key '" + path + "': " + what);
}

// Reject unknown keys so typos surface as schema errors, not silent defaults.
void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& path) {
  if (!obj.is_object()) bad_key(path, "expected an object");
  std::string unknown;
  for (const auto& item : obj.items())
    if (!allowed.count(item.key())) unknown += (unknown.empty() ? "" : ", ") + item.key();
  if (!unknown.empty()) bad_key(path, "unknown keys: " + unknown);
}

template <typename T>
T get_field(const json& obj, const std::string& key, const T& fallback,
            const std::string& path) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    bad_key(path + "." + key, e.what());
  }
}

json teacher_to_json(const TeacherConfig& t) {
  return json{{"kind", to_string(t.kind)},   {"D", t.D},
              {"k_aux", t.k_aux},            {"k_main", t.k_main},
              {"n_overlap", t.n_overlap},    {"correlation", t.correlation},
              {"magnitude", t.magnitude},    {"seed_base", t.seed_base}};
}

TeacherConfig teacher_from_json(const json& obj, const std::string& path) {
  check_keys(obj,
             {"kind", "D", "k_aux", "k_main", "n_overlap", "correlation",
              "magnitude", "seed_base"},
             path);
  TeacherConfig t;
  const std::string kind = get_field<std::string>(obj, "kind", "diag", path);
  try {
    t.kind = teacher_kind_from_string(kind);
  } catch (const ConfigError&) {
    bad_key(path + ".kind", "unknown teacher kind '" + kind + "'");
  }
  t.D = get_field<Eigen::Index>(obj, "D", t.D, path);
  t.k_aux = get_field<Eigen::Index>(obj, "k_aux", t.k_aux, path);
  t.k_main = get_field<Eigen::Index>(obj, "k_main", t.k_main, path);
  t.n_overlap = get_field<Eigen::Index>(obj, "n_overlap", t.n_overlap, path);
  t.correlation = get_field<double>(obj, "correlation", t.correlation, path);
  t.magnitude = get_field<double>(obj, "magnitude", t.magnitude, path);
  t.seed_base = get_field<std::uint64_t>(obj, "seed_base", t.seed_base, path);
  return t;
}

json arm_to_json(const ArmConfig& a) {
  return json{{"label", a.label},
              {"teacher", teacher_to_json(a.teacher)},
              {"paradigm", training::to_string(a.paradigm)},
              {"gamma", a.gamma},
              {"init_scale", a.init_scale},
              {"hidden_units", a.hidden_units},
              {"hidden_scale", a.hidden_scale},
              {"readout_scale", a.readout_scale},
              {"readout_reinit_coeff", a.readout_reinit_coeff},
              {"rescale_factor", a.rescale_factor},
              {"pretrain_loss_threshold", a.pretrain_loss_threshold},
              {"finetune_loss_threshold", a.finetune_loss_threshold},
              {"pretrain_max_steps", a.pretrain_max_steps},
              {"finetune_max_steps", a.finetune_max_steps},
              {"want_penalty", a.want_penalty},
              {"kmeans_K", a.kmeans_K},
              {"want_repr", a.want_repr}};
}

ArmConfig arm_from_json(const json& obj, const std::string& path) {
  check_keys(obj,
             {"label", "teacher", "paradigm", "gamma", "init_scale",
              "hidden_units", "hidden_scale", "readout_scale",
              "readout_reinit_coeff", "rescale_factor",
              "pretrain_loss_threshold", "finetune_loss_threshold",
              "pretrain_max_steps", "finetune_max_steps", "want_penalty",
              "kmeans_K", "want_repr"},
             path);
  ArmConfig a;
  a.label = get_field<std::string>(obj, "label", "", path);
  if (obj.contains("teacher"))
    a.teacher = teacher_from_json(obj.at("teacher"), path + ".teacher");
  const std::string paradigm =
      get_field<std::string>(obj, "paradigm", "stl", path);
  try {
    a.paradigm = training::paradigm_from_string(paradigm);
  } catch (const ConfigError&) {
    bad_key(path + ".paradigm", "unknown paradigm '" + paradigm + "'");
  }
  a.gamma = get_field<double>(obj, "gamma", a.gamma, path);
  a.init_scale = get_field<double>(obj, "init_scale", a.init_scale, path);
  a.hidden_units = get_field<Eigen::Index>(obj, "hidden_units", a.hidden_units, path);
  a.hidden_scale = get_field<double>(obj, "hidden_scale", a.hidden_scale, path);
  a.readout_scale = get_field<double>(obj, "readout_scale", a.readout_scale, path);
  a.readout_reinit_coeff =
      get_field<double>(obj, "readout_reinit_coeff", a.readout_reinit_coeff, path);
  a.rescale_factor = get_field<double>(obj, "rescale_factor", a.rescale_factor, path);
  a.pretrain_loss_threshold =
      get_field<double>(obj, "pretrain_loss_threshold", 0.0, path);
  a.finetune_loss_threshold =
      get_field<double>(obj, "finetune_loss_threshold", 0.0, path);
  a.pretrain_max_steps = get_field<long>(obj, "pretrain_max_steps", 0L, path);
  a.finetune_max_steps = get_field<long>(obj, "finetune_max_steps", 0L, path);
  a.want_penalty = get_field<bool>(obj, "want_penalty", false, path);
  a.kmeans_K = get_field<Eigen::Index>(obj, "kmeans_K", 0, path);
  a.want_repr = get_field<bool>(obj, "want_repr", false, path);
  return a;
}

}  // namespace

std::string to_string(TeacherKind kind) {
  return kind == TeacherKind::diag ? "diag" : "relu";
}

TeacherKind teacher_kind_from_string(const std::string& name) {
  if (name == "diag") return TeacherKind::diag;
  if (name == "relu") return TeacherKind::relu;
  throw ConfigError("unknown teacher kind '" + name + "'");
}

tasks::LinearTeacherSpec TeacherConfig::linear_spec(std::uint64_t run_seed) const {
  tasks::LinearTeacherSpec spec;
  spec.D = D;
  spec.k_aux = k_aux;
  spec.k_main = k_main;
  spec.n_overlap = n_overlap;
  spec.coeff_magnitude = magnitude;
  spec.seed = mix(seed_base, run_seed);
  return spec;
}

tasks::ReluTeacherSpec TeacherConfig::relu_spec(std::uint64_t run_seed) const {
  tasks::ReluTeacherSpec spec;
  spec.D = D;
  spec.units_aux = k_aux;
  spec.units_main = k_main;
  spec.n_shared = n_overlap;
  spec.correlation = correlation;
  spec.main_magnitude = magnitude;
  spec.seed = mix(seed_base, run_seed);
  return spec;
}

training::ParadigmSpec ArmConfig::paradigm_spec(std::uint64_t run_seed) const {
  auto spec = teacher.kind == TeacherKind::diag
                  ? training::ParadigmSpec::diag_defaults(paradigm, run_seed)
                  : training::ParadigmSpec::relu_defaults(paradigm, run_seed);
  spec.gamma = gamma;
  spec.init_scale = init_scale;
  spec.hidden_units = hidden_units;
  spec.hidden_scale = hidden_scale;
  spec.readout_scale = readout_scale;
  spec.readout_reinit_coeff = readout_reinit_coeff;
  spec.rescale_factor = rescale_factor;
  if (pretrain_loss_threshold > 0) spec.pretrain.loss_threshold = pretrain_loss_threshold;
  if (finetune_loss_threshold > 0) spec.finetune.loss_threshold = finetune_loss_threshold;
  if (pretrain_max_steps > 0) spec.pretrain.max_steps = pretrain_max_steps;
  if (finetune_max_steps > 0) spec.finetune.max_steps = finetune_max_steps;
  return spec;
}

void ExperimentConfig::validate() const {
  if (name.empty()) throw ConfigError("config key 'name': must not be empty");
  if (n_aux < 1) throw ConfigError("config key 'n_aux': must be positive");
  if (n_main_grid.empty())
    throw ConfigError("config key 'n_main_grid': must not be empty");
  for (const auto n : n_main_grid)
    if (n < 1) throw ConfigError("config key 'n_main_grid': entries must be positive");
  if (seeds.empty()) throw ConfigError("config key 'seeds': must not be empty");
  if (arms.empty()) throw ConfigError("config key 'arms': must not be empty");
  std::set<std::string> labels;
  for (std::size_t i = 0; i < arms.size(); ++i) {
    const auto& a = arms[i];
    const std::string path = "arms[" + std::to_string(i) + "]";
    if (a.label.empty()) throw ConfigError("config key '" + path + ".label': must not be empty");
    if (a.label.find(',') != std::string::npos ||
        a.label.find(':') != std::string::npos)
      throw ConfigError("config key '" + path + ".label': must not contain ',' or ':'");
    if (!labels.insert(a.label).second)
      throw ConfigError("config key '" + path + ".label': duplicate label '" + a.label + "'");
    if (a.teacher.D < 1) throw ConfigError("config key '" + path + ".teacher.D': must be positive");
    if (a.gamma < 0) throw ConfigError("config key '" + path + ".gamma': must be nonnegative");
    if (a.rescale_factor < 0)
      throw ConfigError("config key '" + path + ".rescale_factor': must be nonnegative");
    if (a.teacher.kind == TeacherKind::relu && a.hidden_units < 1)
      throw ConfigError("config key '" + path + ".hidden_units': must be positive");
    if (a.kmeans_K < 0)
      throw ConfigError("config key '" + path + ".kmeans_K': must be nonnegative");
  }
}

ExperimentConfig config_from_json_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(root, {"name", "figure_id", "n_aux", "n_main_grid", "seeds", "arms"},
             "config");
  ExperimentConfig cfg;
  cfg.name = get_field<std::string>(root, "name", "", "config");
  cfg.figure_id = get_field<std::string>(root, "figure_id", "", "config");
  cfg.n_aux = get_field<Eigen::Index>(root, "n_aux", cfg.n_aux, "config");
  cfg.n_main_grid =
      get_field<std::vector<Eigen::Index>>(root, "n_main_grid", {}, "config");
  cfg.seeds = get_field<std::vector<std::uint64_t>>(root, "seeds", {}, "config");
  if (root.contains("arms")) {
    if (!root.at("arms").is_array()) bad_key("config.arms", "expected an array");
    std::size_t i = 0;
    for (const auto& arm : root.at("arms"))
      cfg.arms.push_back(arm_from_json(arm, "arms[" + std::to_string(i++) + "]"));
  }
  cfg.validate();
  return cfg;
}

std::string config_to_json_text(const ExperimentConfig& cfg) {
  json root{{"name", cfg.name},
            {"figure_id", cfg.figure_id},
            {"n_aux", cfg.n_aux},
            {"n_main_grid", cfg.n_main_grid},
            {"seeds", cfg.seeds}};
  json arms = json::array();
  for (const auto& a : cfg.arms) arms.push_back(arm_to_json(a));
  root["arms"] = std::move(arms);
  return root.dump(2) + "\n";
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return config_from_json_text(buffer.str());
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config file " + path.string());
  out << config_to_json_text(cfg);
  if (!out) throw IoError("failed writing config file " + path.string());
}

std::string config_hash(const ExperimentConfig& cfg) {
  // nlohmann::json objects iterate in key order, so dump() is canonical.
  const std::string canon = config_to_json_text(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : canon) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace mtlft::config
