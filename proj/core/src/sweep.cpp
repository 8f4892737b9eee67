#include "mtlft/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "mtlft/analysis.hpp"
#include "mtlft/errors.hpp"
#include "mtlft/nets.hpp"
#include "mtlft/penalties.hpp"
#include "mtlft/tasks.hpp"
#include "mtlft/training.hpp"

namespace mtlft::sweep {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

constexpr const char* kColumns =
    "run_id,figure_id,paradigm,seed,D,H,k_aux,k_main,n_overlap,correlation,"
    "magnitude,gamma,rescale,n_aux,n_main,steps,final_lr,train_mse,gen_loss,"
    "penalty_id,penalty_value,pr_pre,pr_post,ensd,cka,inertia_K,alignment";

// %.17g round-trips every finite double; NaN serializes portably as "nan".
std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string::size_type start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

[[noreturn]] void bad_row(const std::string& field, const std::string& value) {
  throw IoError("malformed sweep row: field '" + field + "' cannot hold '" + value + "'");
}

double parse_double(const std::string& s, const char* field) {
  if (s == "nan") return kNaN;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || s.empty()) bad_row(field, s);
  return v;
}

long long parse_ll(const std::string& s, const char* field) {
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size() || s.empty()) bad_row(field, s);
  return v;
}

std::uint64_t parse_u64(const std::string& s, const char* field) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size() || s.empty()) bad_row(field, s);
  return v;
}

bool is_ptft(training::Paradigm p) {
  return p == training::Paradigm::PTFT || p == training::Paradigm::PTFT_LinearProbe ||
         p == training::Paradigm::PTFT_NTK;
}

// v_{o,h} * ||w_h||: the per-unit magnitude matrix the group penalty acts on.
Eigen::MatrixXd magnitude_matrix(const nets::ReluNet& net) {
  Eigen::MatrixXd m(net.outputs(), net.units());
  for (Eigen::Index h = 0; h < net.units(); ++h)
    m.col(h) = net.readout.col(h) * net.hidden.row(h).norm();
  return m;
}

// Solution-cost diagnostics. Failures here (degenerate nets, singular scales)
// leave the columns NaN instead of killing a long sweep; the training outcome
// itself is already recorded.
void fill_penalty(const config::ArmConfig& arm, const training::RunOutput& out,
                  RunRecord& row) try {
  using training::Paradigm;
  if (arm.teacher.kind == config::TeacherKind::diag) {
    if (!out.diag) return;
    const Eigen::MatrixXd beta = nets::effective_beta(*out.diag);
    if (arm.paradigm == Paradigm::STL) {
      row.penalty_id = penalties::to_string(penalties::PenaltyId::l1);
      row.penalty_value = beta.row(0).lpNorm<1>();
    } else if (arm.paradigm == Paradigm::MTL) {
      row.penalty_id = penalties::to_string(penalties::PenaltyId::group_lasso);
      row.penalty_value =
          penalties::group_lasso(beta.row(0).transpose(), beta.row(1).transpose());
    } else if (out.diag_pretrained) {
      const Eigen::MatrixXd pre = nets::effective_beta(*out.diag_pretrained);
      row.penalty_id = penalties::to_string(penalties::PenaltyId::q_norm);
      row.penalty_value =
          penalties::q_norm(beta.row(0).transpose(), pre.row(0).transpose(), arm.gamma);
    }
    return;
  }
  if (!out.relu) return;
  if (arm.paradigm == Paradigm::STL || arm.paradigm == Paradigm::MTL) {
    row.penalty_id = penalties::to_string(penalties::PenaltyId::group_lasso);
    row.penalty_value = penalties::mtl_relu_penalty(magnitude_matrix(*out.relu));
    return;
  }
  if (!out.relu_pretrained) return;
  // Per-unit finetuning cost at the learned solution. The auxiliary magnitude
  // is the hidden norm handed to finetuning (pretrained norm times the
  // rescale factor); gamma matches the readout re-init scale.
  const nets::ReluNet& pre = *out.relu_pretrained;
  const nets::ReluNet& ft = *out.relu;
  const double gamma_ft = std::sqrt(arm.readout_reinit_coeff *
                                    std::sqrt(2.0 / static_cast<double>(ft.units())));
  double total = 0.0;
  for (Eigen::Index h = 0; h < ft.units(); ++h) {
    penalties::PenaltyPoint pt;
    const double norm_ft = ft.hidden.row(h).norm();
    const double norm_pre = pre.hidden.row(h).norm();
    pt.m_main = std::abs(ft.readout(0, h)) * norm_ft;
    pt.m_aux = arm.rescale_factor * norm_pre;
    pt.rho = (norm_ft > 0 && norm_pre > 0)
                 ? ft.hidden.row(h).dot(pre.hidden.row(h)) / (norm_ft * norm_pre)
                 : 0.0;
    pt.gamma = gamma_ft;
    total += penalties::relu_ft_penalty(pt).objective_at_root;
  }
  row.penalty_id = penalties::to_string(penalties::PenaltyId::relu_ft);
  row.penalty_value = total;
} catch (const std::exception&) {
  row.penalty_id.clear();
  row.penalty_value = kNaN;
}

void fill_representation(const training::RunOutput& out, RunRecord& row) try {
  std::optional<analysis::ActivationMatrix> pre_act, post_act;
  if (out.relu_pretrained) pre_act = analysis::relu_probe_activations(*out.relu_pretrained);
  if (out.relu) post_act = analysis::relu_probe_activations(*out.relu);
  if (pre_act) row.pr_pre = analysis::participation_ratio(*pre_act);
  if (post_act) row.pr_post = analysis::participation_ratio(*post_act);
  if (pre_act && post_act) {
    row.ensd = analysis::ensd(*pre_act, *post_act);
    row.cka = analysis::cka(*pre_act, *post_act);
  }
} catch (const std::exception&) {
  // leave whatever could not be measured as NaN
}

void fill_clusters(const config::ArmConfig& arm, const training::RunOutput& out,
                   const nets::ReluNet& teacher_main, RunRecord& row) try {
  if (!out.relu) return;
  const auto report = analysis::weighted_kmeans_inertia(*out.relu, arm.kmeans_K, 11);
  row.inertia_K = report.inertia;
  row.alignment = analysis::alignment_score(teacher_main, report);
} catch (const std::exception&) {
  row.inertia_K = kNaN;
  row.alignment = kNaN;
}

void fill_outcome(const training::RunOutput& out, RunRecord& row) {
  row.steps = out.pretrain_trace.steps + out.train_trace.steps;
  row.final_lr = out.train_trace.steps > 0 ? out.train_trace.final_lr : kNaN;
  if (out.aborted) return;  // losses stay NaN: pretraining never converged
  row.train_mse = out.train_trace.final_loss;
}

struct Cell {
  std::size_t arm = 0;
  Eigen::Index n_main = 0;
  std::uint64_t seed = 0;
  std::string run_id;
};

double sample_std(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double ss = 0.0;
  for (const double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

const double* metric_field(const RunRecord& r, const std::string& metric) {
  if (metric == "gen_loss") return &r.gen_loss;
  if (metric == "train_mse") return &r.train_mse;
  if (metric == "final_lr") return &r.final_lr;
  if (metric == "penalty_value") return &r.penalty_value;
  if (metric == "pr_pre") return &r.pr_pre;
  if (metric == "pr_post") return &r.pr_post;
  if (metric == "ensd") return &r.ensd;
  if (metric == "cka") return &r.cka;
  if (metric == "inertia_K") return &r.inertia_K;
  if (metric == "alignment") return &r.alignment;
  return nullptr;
}

}  // namespace

std::string csv_header() { return kColumns; }

std::string to_csv_row(const RunRecord& r) {
  std::ostringstream os;
  os << r.run_id << ',' << r.figure_id << ',' << r.paradigm << ',' << r.seed << ','
     << r.D << ',' << r.H << ',' << r.k_aux << ',' << r.k_main << ',' << r.n_overlap
     << ',' << fmt(r.correlation) << ',' << fmt(r.magnitude) << ',' << fmt(r.gamma)
     << ',' << fmt(r.rescale) << ',' << r.n_aux << ',' << r.n_main << ',' << r.steps
     << ',' << fmt(r.final_lr) << ',' << fmt(r.train_mse) << ',' << fmt(r.gen_loss)
     << ',' << r.penalty_id << ',' << fmt(r.penalty_value) << ',' << fmt(r.pr_pre)
     << ',' << fmt(r.pr_post) << ',' << fmt(r.ensd) << ',' << fmt(r.cka) << ','
     << fmt(r.inertia_K) << ',' << fmt(r.alignment);
  return os.str();
}

RunRecord record_from_csv_row(const std::string& line) {
  const auto f = split(line, ',');
  if (f.size() != 27)
    throw IoError("malformed sweep row: expected 27 fields, got " +
                  std::to_string(f.size()));
  RunRecord r;
  r.run_id = f[0];
  r.figure_id = f[1];
  r.paradigm = f[2];
  r.seed = parse_u64(f[3], "seed");
  r.D = parse_ll(f[4], "D");
  r.H = parse_ll(f[5], "H");
  r.k_aux = parse_ll(f[6], "k_aux");
  r.k_main = parse_ll(f[7], "k_main");
  r.n_overlap = parse_ll(f[8], "n_overlap");
  r.correlation = parse_double(f[9], "correlation");
  r.magnitude = parse_double(f[10], "magnitude");
  r.gamma = parse_double(f[11], "gamma");
  r.rescale = parse_double(f[12], "rescale");
  r.n_aux = parse_ll(f[13], "n_aux");
  r.n_main = parse_ll(f[14], "n_main");
  r.steps = parse_ll(f[15], "steps");
  r.final_lr = parse_double(f[16], "final_lr");
  r.train_mse = parse_double(f[17], "train_mse");
  r.gen_loss = parse_double(f[18], "gen_loss");
  r.penalty_id = f[19];
  r.penalty_value = parse_double(f[20], "penalty_value");
  r.pr_pre = parse_double(f[21], "pr_pre");
  r.pr_post = parse_double(f[22], "pr_post");
  r.ensd = parse_double(f[23], "ensd");
  r.cka = parse_double(f[24], "cka");
  r.inertia_K = parse_double(f[25], "inertia_K");
  r.alignment = parse_double(f[26], "alignment");
  return r;
}

RunRecord run_cell(const config::ArmConfig& arm, Eigen::Index n_aux,
                   Eigen::Index n_main, std::uint64_t seed,
                   const std::string& run_id, const std::string& figure_id) {
  using training::Paradigm;
  const config::TeacherConfig& t = arm.teacher;
  const bool relu = t.kind == config::TeacherKind::relu;
  const bool needs_aux = arm.paradigm != Paradigm::STL;

  RunRecord row;
  row.run_id = run_id;
  row.figure_id = figure_id;
  row.paradigm = training::to_string(arm.paradigm);
  row.seed = seed;
  row.D = t.D;
  row.H = relu ? arm.hidden_units : 0;
  row.k_aux = t.k_aux;
  row.k_main = t.k_main;
  row.n_overlap = t.n_overlap;
  row.correlation = relu ? t.correlation : kNaN;
  row.magnitude = t.magnitude;
  row.gamma = arm.gamma;
  row.rescale = is_ptft(arm.paradigm) ? arm.rescale_factor : kNaN;
  row.n_aux = needs_aux ? n_aux : 0;
  row.n_main = n_main;
  row.final_lr = row.train_mse = row.gen_loss = kNaN;
  row.penalty_value = row.pr_pre = row.pr_post = row.ensd = row.cka = kNaN;
  row.inertia_K = row.alignment = kNaN;

  // Independent streams: the teacher draw is shared by every arm at this
  // seed, dataset draws depend only on the teacher stream (and the grid point
  // for the main task), and student init randomness comes from the raw seed
  // via the paradigm spec.
  const std::uint64_t tseed = config::derive_seed(t.seed_base, seed);
  const std::uint64_t aux_seed = config::derive_seed(tseed, 11);
  const std::uint64_t main_seed =
      config::derive_seed(config::derive_seed(tseed, 13),
                          static_cast<std::uint64_t>(n_main));
  const training::ParadigmSpec spec = arm.paradigm_spec(seed);

  training::RunOutput out;
  if (!relu) {
    const tasks::LinearTeacher teacher = tasks::gen_linear_teacher(t.linear_spec(seed));
    const tasks::Dataset main =
        tasks::sample_dataset(teacher.beta_main, n_main, tasks::TaskId::main, main_seed);
    if (arm.paradigm == Paradigm::STL) {
      out = training::run_stl_diag(main, spec);
    } else {
      const tasks::Dataset aux =
          tasks::sample_dataset(teacher.beta_aux, n_aux, tasks::TaskId::aux, aux_seed);
      out = arm.paradigm == Paradigm::MTL ? training::run_mtl_diag(aux, main, spec)
                                          : training::run_ptft_diag(aux, main, spec);
    }
    fill_outcome(out, row);
    if (!out.aborted)
      row.gen_loss = tasks::generalization_loss(out.model,
                                                tasks::predictor(teacher.beta_main), t.D);
    if (arm.want_penalty && !out.aborted) fill_penalty(arm, out, row);
    return row;
  }

  const tasks::ReluTeacherPair teacher = tasks::gen_relu_teacher(t.relu_spec(seed));
  const tasks::Dataset main =
      tasks::sample_dataset(teacher.main, n_main, tasks::TaskId::main, main_seed);
  if (arm.paradigm == Paradigm::STL) {
    out = training::run_stl_relu(main, spec);
  } else {
    const tasks::Dataset aux =
        tasks::sample_dataset(teacher.aux, n_aux, tasks::TaskId::aux, aux_seed);
    out = arm.paradigm == Paradigm::MTL ? training::run_mtl_relu(aux, main, spec)
                                        : training::run_ptft_relu(aux, main, spec);
  }
  fill_outcome(out, row);
  if (!out.aborted)
    row.gen_loss = tasks::generalization_loss(out.model,
                                              tasks::predictor(teacher.main, 0), t.D);
  if (arm.want_penalty && !out.aborted) fill_penalty(arm, out, row);
  if (arm.want_repr) fill_representation(out, row);
  if (arm.kmeans_K > 0 && !out.aborted) fill_clusters(arm, out, teacher.main, row);
  return row;
}

SweepResult run_sweep(const config::ExperimentConfig& cfg, const SweepOptions& opts) {
  cfg.validate();
  const std::string hash = config::config_hash(cfg);
  const std::string journal_tag = "# config " + hash;
  std::filesystem::create_directories(opts.out_dir);

  SweepResult res;
  res.table_path = opts.out_dir / (cfg.name + ".csv");
  res.curves_path = opts.out_dir / (cfg.name + ".curves.csv");
  res.journal_path = opts.out_dir / (cfg.name + ".journal.csv");

  std::vector<Cell> cells;
  std::unordered_map<std::string, std::size_t> slot_of;
  for (std::size_t a = 0; a < cfg.arms.size(); ++a)
    for (const Eigen::Index n : cfg.n_main_grid)
      for (const std::uint64_t s : cfg.seeds) {
        Cell cell{a, n, s,
                  hash.substr(0, 8) + ":" + cfg.arms[a].label + ":n" +
                      std::to_string(n) + ":s" + std::to_string(s)};
        slot_of.emplace(cell.run_id, cells.size());
        cells.push_back(std::move(cell));
      }

  // Resume: reuse every complete journaled row written under this exact
  // config hash. A torn final line or a stale journal is discarded.
  std::vector<RunRecord> rows(cells.size());
  std::vector<char> have(cells.size(), 0);
  bool append_journal = false;
  if (opts.resume && std::filesystem::exists(res.journal_path)) {
    std::ifstream in(res.journal_path);
    std::string line;
    if (std::getline(in, line) && line == journal_tag) {
      append_journal = true;
      while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line == csv_header()) continue;
        try {
          RunRecord r = record_from_csv_row(line);
          const auto it = slot_of.find(r.run_id);
          if (it != slot_of.end() && !have[it->second]) {
            rows[it->second] = std::move(r);
            have[it->second] = 1;
            ++res.skipped;
          }
        } catch (const IoError&) {
          // incomplete tail from an interrupted write; recompute that cell
        }
      }
    }
  }

  std::ofstream journal;
  if (append_journal) {
    journal.open(res.journal_path, std::ios::app);
  } else {
    journal.open(res.journal_path, std::ios::trunc);
    journal << journal_tag << '\n' << csv_header() << '\n' << std::flush;
  }
  if (!journal) throw IoError("cannot open journal " + res.journal_path.string());

  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (!have[i]) todo.push_back(i);
  res.computed = static_cast<long>(todo.size());

  std::atomic<std::size_t> next{0};
  std::mutex io_mu;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= todo.size()) return;
      const Cell& cell = cells[todo[k]];
      try {
        RunRecord row = run_cell(cfg.arms[cell.arm], cfg.n_aux, cell.n_main,
                                 cell.seed, cell.run_id, cfg.figure_id);
        std::lock_guard<std::mutex> lock(io_mu);
        journal << to_csv_row(row) << '\n' << std::flush;
        rows[todo[k]] = std::move(row);
      } catch (...) {
        std::lock_guard<std::mutex> lock(io_mu);
        if (!failure) failure = std::current_exception();
        next.store(todo.size());
        return;
      }
    }
  };
  int n_threads = opts.threads;
  if (n_threads <= 0) n_threads = static_cast<int>(std::thread::hardware_concurrency());
  n_threads = std::max(1, std::min<int>(n_threads, static_cast<int>(todo.size() ? todo.size() : 1)));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  journal.close();

  // Final table: canonical order regardless of journal order, written through
  // a temporary so readers never see a half table.
  const std::filesystem::path tmp_table = res.table_path.string() + ".tmp";
  {
    std::ofstream out(tmp_table, std::ios::trunc);
    if (!out) throw IoError("cannot open table " + tmp_table.string());
    out << csv_header() << '\n';
    for (const RunRecord& r : rows) out << to_csv_row(r) << '\n';
  }
  std::filesystem::rename(tmp_table, res.table_path);

  const std::filesystem::path tmp_curves = res.curves_path.string() + ".tmp";
  {
    std::ofstream out(tmp_curves, std::ios::trunc);
    if (!out) throw IoError("cannot open curves " + tmp_curves.string());
    out << "figure_id,label,paradigm,n_main,runs,failed,mean,std,lo,hi\n";
    std::size_t at = 0;
    for (std::size_t a = 0; a < cfg.arms.size(); ++a)
      for (const Eigen::Index n : cfg.n_main_grid) {
        std::vector<double> vals;
        std::string paradigm;
        std::size_t runs = 0;
        for (std::size_t s = 0; s < cfg.seeds.size(); ++s, ++at) {
          ++runs;
          paradigm = rows[at].paradigm;
          if (std::isfinite(rows[at].gen_loss)) vals.push_back(rows[at].gen_loss);
        }
        double mean = kNaN, sd = kNaN, lo = kNaN, hi = kNaN;
        if (!vals.empty()) {
          mean = 0.0;
          for (const double v : vals) mean += v;
          mean /= static_cast<double>(vals.size());
          sd = sample_std(vals, mean);
          lo = mean - 2.0 * sd;
          hi = mean + 2.0 * sd;
        }
        out << cfg.figure_id << ',' << cfg.arms[a].label << ',' << paradigm << ','
            << n << ',' << runs << ',' << runs - vals.size() << ',' << fmt(mean)
            << ',' << fmt(sd) << ',' << fmt(lo) << ',' << fmt(hi) << '\n';
      }
  }
  std::filesystem::rename(tmp_curves, res.curves_path);

  res.rows = std::move(rows);
  return res;
}

double curve_mean(const std::vector<RunRecord>& rows, const std::string& label,
                  Eigen::Index n_main, const std::string& metric) {
  const RunRecord probe;
  if (!metric_field(probe, metric))
    throw ConfigError("unknown sweep metric '" + metric + "'");
  double sum = 0.0;
  long count = 0;
  for (const RunRecord& r : rows) {
    if (r.n_main != n_main) continue;
    const auto parts = split(r.run_id, ':');
    if (parts.size() != 4 || parts[1] != label) continue;
    const double v = *metric_field(r, metric);
    if (std::isfinite(v)) {
      sum += v;
      ++count;
    }
  }
  return count > 0 ? sum / static_cast<double>(count) : kNaN;
}

}  // namespace mtlft::sweep
