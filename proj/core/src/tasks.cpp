#include "mtlft/tasks.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>

#include "mtlft/checkpoint.hpp"

namespace mtlft::tasks {

namespace {

Eigen::MatrixXd gaussian_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd out(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) out(i, j) = g(rng);
  return out;
}

// FNV-1a over raw bytes; stable across runs for identical doubles.
std::uint64_t fnv1a(const double* data, std::size_t count, std::uint64_t h) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < count * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string to_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

std::string to_string(TaskId id) { return id == TaskId::aux ? "aux" : "main"; }

TaskId task_id_from_string(const std::string& name) {
  if (name == "aux") return TaskId::aux;
  if (name == "main") return TaskId::main;
  throw ConfigError("unknown task id: " + name);
}

LinearTeacher gen_linear_teacher(const LinearTeacherSpec& spec) {
  if (spec.D <= 0 || spec.k_aux < 0 || spec.k_main < 0 || spec.n_overlap < 0)
    throw ConfigError("linear teacher counts must be nonnegative with D > 0");
  if (spec.k_aux > spec.D || spec.k_main > spec.D)
    throw ConfigError("support size exceeds dimension D");
  if (spec.n_overlap > std::min(spec.k_aux, spec.k_main))
    throw ConfigError("overlap exceeds a support size");
  if (spec.k_aux + spec.k_main - spec.n_overlap > spec.D)
    throw ConfigError("combined support does not fit in dimension D");

  std::mt19937_64 rng(spec.seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(spec.D));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::shuffle(order.begin(), order.end(), rng);

  // A uniformly shuffled index order makes the leading blocks uniform draws
  // without replacement: aux takes the first k_aux, the overlap is the first
  // n_overlap of those, and main completes its support from indices beyond
  // the aux block.
  LinearTeacher t;
  t.support_aux.assign(order.begin(), order.begin() + spec.k_aux);
  t.support_main.assign(order.begin(), order.begin() + spec.n_overlap);
  t.support_main.insert(t.support_main.end(), order.begin() + spec.k_aux,
                        order.begin() + spec.k_aux + (spec.k_main - spec.n_overlap));
  std::sort(t.support_aux.begin(), t.support_aux.end());
  std::sort(t.support_main.begin(), t.support_main.end());

  std::bernoulli_distribution coin(0.5);
  t.beta_aux = Eigen::VectorXd::Zero(spec.D);
  t.beta_main = Eigen::VectorXd::Zero(spec.D);
  for (Eigen::Index d : t.support_aux)
    t.beta_aux[d] = (coin(rng) ? 1.0 : -1.0) * spec.coeff_magnitude;
  for (Eigen::Index d : t.support_main)
    t.beta_main[d] = (coin(rng) ? 1.0 : -1.0) * spec.coeff_magnitude;
  return t;
}

ReluTeacherPair gen_relu_teacher(const ReluTeacherSpec& spec) {
  if (std::abs(spec.correlation) > 1.0)
    throw DomainError("teacher unit correlation must lie in [-1, 1]");
  if (spec.D <= 0 || spec.units_aux <= 0 || spec.units_main <= 0 || spec.n_shared < 0)
    throw ConfigError("relu teacher counts must be positive");
  if (spec.n_shared > std::min(spec.units_aux, spec.units_main))
    throw ConfigError("shared unit count exceeds a teacher's unit count");

  std::mt19937_64 rng(spec.seed);
  auto sphere_row = [&](Eigen::Index D) {
    Eigen::VectorXd g = gaussian_matrix(D, 1, rng);
    return (g / g.norm()).eval();
  };

  ReluTeacherPair pair;
  pair.aux.hidden.resize(spec.units_aux, spec.D);
  pair.main.hidden.resize(spec.units_main, spec.D);
  for (Eigen::Index h = 0; h < spec.units_aux; ++h)
    pair.aux.hidden.row(h) = sphere_row(spec.D).transpose();

  for (Eigen::Index h = 0; h < spec.units_main; ++h) {
    if (h < spec.n_shared) {
      const Eigen::VectorXd theta = pair.aux.hidden.row(h).transpose();
      if (spec.correlation == 1.0) {
        pair.main.hidden.row(h) = theta.transpose();
      } else if (spec.correlation == -1.0) {
        pair.main.hidden.row(h) = -theta.transpose();
      } else {
        // Mix with a unit vector orthogonal to theta so the cosine equals
        // the requested correlation exactly (up to rounding).
        Eigen::VectorXd ortho;
        do {
          const Eigen::VectorXd g = gaussian_matrix(spec.D, 1, rng);
          ortho = g - theta.dot(g) * theta;
        } while (ortho.norm() < 1e-8);
        ortho.normalize();
        pair.main.hidden.row(h) =
            (spec.correlation * theta +
             std::sqrt(1.0 - spec.correlation * spec.correlation) * ortho)
                .transpose();
      }
    } else {
      pair.main.hidden.row(h) = sphere_row(spec.D).transpose();
    }
  }

  if (spec.gaussian_readout) {
    pair.aux.readout = gaussian_matrix(1, spec.units_aux, rng);
    pair.main.readout = spec.main_magnitude * gaussian_matrix(1, spec.units_main, rng);
  } else {
    pair.aux.readout = Eigen::MatrixXd::Ones(1, spec.units_aux);
    pair.main.readout = Eigen::MatrixXd::Constant(1, spec.units_main, spec.main_magnitude);
  }
  return pair;
}

Eigen::MatrixXd sample_sphere(Eigen::Index n, Eigen::Index D, std::uint64_t seed) {
  if (n < 1 || D < 1) throw ConfigError("sphere sample needs n >= 1 and D >= 1");
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd X = gaussian_matrix(n, D, rng);
  for (Eigen::Index i = 0; i < n; ++i) X.row(i).normalize();
  return X;
}

Dataset sample_dataset(const Eigen::VectorXd& beta, Eigen::Index n, TaskId task_id,
                       std::uint64_t seed) {
  Dataset data;
  data.X = sample_sphere(n, beta.size(), seed);
  data.y = data.X * beta;
  data.task_id = task_id;
  data.fingerprint = fingerprint_of(beta);
  return data;
}

Dataset sample_dataset(const nets::ReluNet& teacher, Eigen::Index n, TaskId task_id,
                       std::uint64_t seed) {
  Dataset data;
  data.X = sample_sphere(n, teacher.dim(), seed);
  data.y = nets::relu_forward(teacher, data.X);
  data.task_id = task_id;
  data.fingerprint = fingerprint_of(teacher);
  return data;
}

std::string fingerprint_of(const Eigen::VectorXd& beta) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const double size = static_cast<double>(beta.size());
  h = fnv1a(&size, 1, h);
  h = fnv1a(beta.data(), static_cast<std::size_t>(beta.size()), h);
  return to_hex(h);
}

std::string fingerprint_of(const nets::ReluNet& net) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const double dims[3] = {static_cast<double>(net.units()),
                          static_cast<double>(net.dim()),
                          static_cast<double>(net.outputs())};
  h = fnv1a(dims, 3, h);
  // Hash through a row-major copy so the fingerprint is layout-independent.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> hid =
      net.hidden;
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> ro =
      net.readout;
  h = fnv1a(hid.data(), static_cast<std::size_t>(hid.size()), h);
  h = fnv1a(ro.data(), static_cast<std::size_t>(ro.size()), h);
  return to_hex(h);
}

Predictor predictor(const Eigen::VectorXd& beta) {
  return [beta](const Eigen::MatrixXd& X) -> Eigen::VectorXd { return X * beta; };
}

Predictor predictor(const nets::DiagonalLinearNet& net, Eigen::Index output) {
  const Eigen::VectorXd beta = nets::effective_beta(net).row(output).transpose();
  return predictor(beta);
}

Predictor predictor(const nets::ReluNet& net, Eigen::Index output) {
  return [net, output](const Eigen::MatrixXd& X) -> Eigen::VectorXd {
    return nets::relu_forward(net, X).col(output);
  };
}

double generalization_loss(const Predictor& model, const Predictor& teacher,
                           Eigen::Index D, Eigen::Index n_test, std::uint64_t seed) {
  if (n_test < 1) throw ConfigError("generalization loss needs n_test >= 1");
  const Eigen::MatrixXd X = sample_sphere(n_test, D, seed);
  const Eigen::VectorXd diff = model(X) - teacher(X);
  return diff.squaredNorm() / static_cast<double>(n_test);
}

void save_dataset(const std::filesystem::path& path, const Dataset& data,
                  std::uint64_t seed) {
  io::CheckpointData ckpt;
  ckpt.kind = "dataset";
  ckpt.seed = seed;
  ckpt.provenance = "teacher-student sampler";
  ckpt.scalars = {{"n", static_cast<double>(data.n())},
                  {"D", static_cast<double>(data.dim())},
                  {"O", static_cast<double>(data.outputs())}};
  ckpt.labels = {{"task_id", to_string(data.task_id)},
                 {"fingerprint", data.fingerprint}};
  ckpt.blocks = {{"X", data.X}, {"y", data.y}};
  io::save_checkpoint(path, ckpt);
}

Dataset load_dataset(const std::filesystem::path& path) {
  const io::CheckpointData ckpt = io::load_checkpoint(path);
  if (ckpt.kind != "dataset")
    throw IoError("'" + path.string() + "' holds kind '" + ckpt.kind +
                  "', expected dataset");
  Dataset data;
  data.X = ckpt.block("X");
  data.y = ckpt.block("y");
  data.task_id = task_id_from_string(ckpt.labels.at("task_id"));
  data.fingerprint = ckpt.labels.at("fingerprint");
  return data;
}

}  // namespace mtlft::tasks
