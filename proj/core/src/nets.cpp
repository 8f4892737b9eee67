#include "mtlft/nets.hpp"

#include <cmath>
#include <random>
#include <string>

namespace mtlft::nets {

namespace {

void check_xy(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, Eigen::Index D,
              Eigen::Index O, const TaskMask* mask) {
  if (X.cols() != D)
    throw DimensionError("input has " + std::to_string(X.cols()) +
                         " columns, network expects " + std::to_string(D));
  if (Y.rows() != X.rows() || Y.cols() != O)
    throw DimensionError("target shape " + std::to_string(Y.rows()) + "x" +
                         std::to_string(Y.cols()) + " does not match " +
                         std::to_string(X.rows()) + " samples x " +
                         std::to_string(O) + " outputs");
  if (mask && (mask->rows() != X.rows() || mask->cols() != O))
    throw DimensionError("task mask shape does not match samples x outputs");
}

// Per-entry coefficients c(i, o) of the objective sum_{i,o} c(i,o) *
// (pred(i,o) - Y(i,o))^2: 1/n_o on selected entries, 0 elsewhere.
Eigen::MatrixXd objective_coefficients(Eigen::Index n, Eigen::Index O,
                                       const TaskMask* mask) {
  Eigen::MatrixXd c(n, O);
  if (!mask) {
    c.setConstant(1.0 / static_cast<double>(n));
    return c;
  }
  for (Eigen::Index o = 0; o < O; ++o) {
    const Eigen::Index n_o = mask->col(o).count();
    if (n_o == 0)
      throw DegenerateObjectiveError("no samples selected for output " +
                                     std::to_string(o));
    c.col(o) = mask->col(o).cast<double>() / static_cast<double>(n_o);
  }
  return c;
}

}  // namespace

Eigen::MatrixXd effective_beta(const DiagonalLinearNet& net) {
  // The pathway products are materialized separately so that the compiler
  // cannot fuse a*b - c*d into an FMA with an unrounded partial product;
  // symmetric pathways must cancel to exactly zero (the zero-function start
  // after readout re-initialization depends on it).
  const Eigen::MatrixXd plus =
      net.v_plus.array().rowwise() * net.w_plus.transpose().array();
  const Eigen::MatrixXd minus =
      net.v_minus.array().rowwise() * net.w_minus.transpose().array();
  return plus - minus;
}

Eigen::MatrixXd diag_forward(const DiagonalLinearNet& net, const Eigen::MatrixXd& X) {
  if (X.cols() != net.dim())
    throw DimensionError("input has " + std::to_string(X.cols()) +
                         " columns, network expects " + std::to_string(net.dim()));
  return X * effective_beta(net).transpose();
}

Eigen::MatrixXd relu_forward(const ReluNet& net, const Eigen::MatrixXd& X) {
  if (X.cols() != net.dim())
    throw DimensionError("input has " + std::to_string(X.cols()) +
                         " columns, network expects " + std::to_string(net.dim()));
  Eigen::MatrixXd activations = (X * net.hidden.transpose()).cwiseMax(0.0);
  return activations * net.readout.transpose();
}

MagnitudeDirectionView to_magnitude_direction(const ReluNet& net) {
  const Eigen::VectorXd norms = net.hidden.rowwise().norm();
  std::vector<int> degenerate;
  for (Eigen::Index h = 0; h < norms.size(); ++h)
    if (norms[h] == 0.0) degenerate.push_back(static_cast<int>(h));
  if (!degenerate.empty())
    throw DegenerateUnitError("hidden rows with zero norm have no direction",
                              std::move(degenerate));
  MagnitudeDirectionView view;
  view.m = net.readout.array().rowwise() * norms.transpose().array();
  view.theta = net.hidden.array().colwise() / norms.array();
  return view;
}

ReluNet from_magnitude_direction(const MagnitudeDirectionView& view) {
  if (view.m.cols() != view.theta.rows())
    throw DimensionError("magnitude columns must match direction rows");
  ReluNet net;
  net.hidden = view.theta;
  net.readout = view.m;
  return net;
}

double mse_loss(const DiagonalLinearNet& net, const Eigen::MatrixXd& X,
                const Eigen::MatrixXd& Y, const TaskMask* mask) {
  check_xy(X, Y, net.dim(), net.outputs(), mask);
  const Eigen::MatrixXd c = objective_coefficients(X.rows(), net.outputs(), mask);
  const Eigen::MatrixXd residual = X * effective_beta(net).transpose() - Y;
  return (c.array() * residual.array().square()).sum();
}

double mse_loss(const ReluNet& net, const Eigen::MatrixXd& X,
                const Eigen::MatrixXd& Y, const TaskMask* mask) {
  check_xy(X, Y, net.dim(), net.outputs(), mask);
  const Eigen::MatrixXd c = objective_coefficients(X.rows(), net.outputs(), mask);
  const Eigen::MatrixXd residual = relu_forward(net, X) - Y;
  return (c.array() * residual.array().square()).sum();
}

DiagGradients mse_gradients(const DiagonalLinearNet& net, const Eigen::MatrixXd& X,
                            const Eigen::MatrixXd& Y, const TaskMask* mask) {
  check_xy(X, Y, net.dim(), net.outputs(), mask);
  const Eigen::MatrixXd c = objective_coefficients(X.rows(), net.outputs(), mask);
  const Eigen::MatrixXd beta = effective_beta(net);
  const Eigen::MatrixXd residual = X * beta.transpose() - Y;

  DiagGradients g;
  g.loss = (c.array() * residual.array().square()).sum();
  // d loss / d pred, shape n x O.
  const Eigen::MatrixXd gpred = 2.0 * (c.array() * residual.array()).matrix();
  const Eigen::MatrixXd gbeta = gpred.transpose() * X;  // O x D
  g.v_plus = gbeta.array().rowwise() * net.w_plus.transpose().array();
  g.v_minus = -(gbeta.array().rowwise() * net.w_minus.transpose().array());
  g.w_plus = (gbeta.array() * net.v_plus.array()).colwise().sum().transpose();
  g.w_minus = -(gbeta.array() * net.v_minus.array()).colwise().sum().transpose();
  return g;
}

ReluGradients mse_gradients(const ReluNet& net, const Eigen::MatrixXd& X,
                            const Eigen::MatrixXd& Y, const TaskMask* mask) {
  check_xy(X, Y, net.dim(), net.outputs(), mask);
  const Eigen::MatrixXd c = objective_coefficients(X.rows(), net.outputs(), mask);
  const Eigen::MatrixXd pre = X * net.hidden.transpose();        // n x H
  const Eigen::MatrixXd act = pre.cwiseMax(0.0);                 // n x H
  const Eigen::MatrixXd residual = act * net.readout.transpose() - Y;

  ReluGradients g;
  g.loss = (c.array() * residual.array().square()).sum();
  const Eigen::MatrixXd gpred = 2.0 * (c.array() * residual.array()).matrix();
  g.readout = gpred.transpose() * act;  // O x H
  // Derivative through the ReLU: active where the preactivation is strictly
  // positive (zero preactivations contribute no gradient).
  const Eigen::MatrixXd gact =
      ((gpred * net.readout).array() * (pre.array() > 0.0).cast<double>()).matrix();
  g.hidden = gact.transpose() * X;  // H x D
  return g;
}

DiagonalLinearNet init_diag(Eigen::Index D, Eigen::Index O, double scale,
                            std::uint64_t seed) {
  (void)seed;  // the constant fill is deterministic by construction
  if (scale < 0.0) throw DomainError("init scale must be nonnegative");
  DiagonalLinearNet net;
  net.w_plus = Eigen::VectorXd::Constant(D, scale);
  net.w_minus = Eigen::VectorXd::Constant(D, scale);
  net.v_plus = Eigen::MatrixXd::Constant(O, D, scale);
  net.v_minus = Eigen::MatrixXd::Constant(O, D, scale);
  return net;
}

ReluNet init_relu(Eigen::Index D, Eigen::Index H, Eigen::Index O,
                  double hidden_scale, double readout_scale, std::uint64_t seed) {
  if (hidden_scale < 0.0 || readout_scale < 0.0)
    throw DomainError("init scales must be nonnegative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  ReluNet net;
  net.hidden.resize(H, D);
  net.readout.resize(O, H);
  for (Eigen::Index h = 0; h < H; ++h)
    for (Eigen::Index d = 0; d < D; ++d) net.hidden(h, d) = hidden_scale * gauss(rng);
  for (Eigen::Index o = 0; o < O; ++o)
    for (Eigen::Index h = 0; h < H; ++h) net.readout(o, h) = readout_scale * gauss(rng);
  return net;
}

double default_hidden_scale(Eigen::Index D) {
  return std::sqrt(2.0 / static_cast<double>(D));
}

double default_readout_scale(Eigen::Index H) {
  return std::sqrt(2.0 / static_cast<double>(H));
}

}  // namespace mtlft::nets
