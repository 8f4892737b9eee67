#pragma once

// Shallow network models and their analytic machinery.
//
// Two architectures are provided:
//   * DiagonalLinearNet — a two-layer linear model whose first layer is a
//     one-to-one (diagonal) connection with duplicated +/- pathways. Its
//     input-output map is linear with effective coefficient rows
//     beta_o = v_{+,o} .* w_+  -  v_{-,o} .* w_-.
//   * ReluNet — a single-hidden-layer network f_o(x) = sum_h v_{o,h} * relu(<w_h, x>).
//
// Alongside the forward passes this header exposes the magnitude/direction
// reparameterization of ReLU units, exact analytic gradients of the masked
// mean-squared-error objective, and deterministic seeded initializers.

#include <cstdint>
#include <optional>

#include <Eigen/Core>

#include "mtlft/errors.hpp"

namespace mtlft::nets {

// Boolean sample x output selector: mask(i, o) == true means sample i
// contributes to output o's mean squared error.
using TaskMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// ---------------------------------------------------------------------------
// Model types
// ---------------------------------------------------------------------------

// Diagonal linear network with +/- pathway weights w_plus, w_minus in R^D and
// per-output readouts v_plus, v_minus in R^{O x D}. The duplicated pathways
// keep gradient descent away from the saddle at zero coefficients: symmetric
// initialization makes beta exactly zero while parameter gradients stay
// nonzero and split the pathways.
struct DiagonalLinearNet {
  Eigen::VectorXd w_plus;   // D
  Eigen::VectorXd w_minus;  // D
  Eigen::MatrixXd v_plus;   // O x D
  Eigen::MatrixXd v_minus;  // O x D

  Eigen::Index dim() const { return w_plus.size(); }
  Eigen::Index outputs() const { return v_plus.rows(); }
};

// Single-hidden-layer ReLU network: hidden rows are unit input weights w_h,
// readout entries are v_{o,h}.
struct ReluNet {
  Eigen::MatrixXd hidden;   // H x D
  Eigen::MatrixXd readout;  // O x H

  Eigen::Index dim() const { return hidden.cols(); }
  Eigen::Index units() const { return hidden.rows(); }
  Eigen::Index outputs() const { return readout.rows(); }
};

// Magnitude/direction reparameterization of a ReLU net: m(o, h) = v_{o,h} *
// ||w_h||_2 and theta row h = w_h / ||w_h||_2. The network function depends on
// the parameters only through (m, theta) by positive homogeneity of the ReLU.
struct MagnitudeDirectionView {
  Eigen::MatrixXd m;      // O x H
  Eigen::MatrixXd theta;  // H x D, unit-norm rows
};

// Analytic gradient of the masked MSE objective, shaped like the owning
// network's parameters, together with the loss value it was taken at.
struct DiagGradients {
  Eigen::VectorXd w_plus;
  Eigen::VectorXd w_minus;
  Eigen::MatrixXd v_plus;
  Eigen::MatrixXd v_minus;
  double loss = 0.0;
};

struct ReluGradients {
  Eigen::MatrixXd hidden;
  Eigen::MatrixXd readout;
  double loss = 0.0;
};

// ---------------------------------------------------------------------------
// Forward passes and reparameterizations
// ---------------------------------------------------------------------------

// Effective linear coefficients, beta(o, d) = v_plus(o, d) * w_plus(d) -
// v_minus(o, d) * w_minus(d). Shape O x D.
Eigen::MatrixXd effective_beta(const DiagonalLinearNet& net);

// Returns X * beta^T (n x O). Throws DimensionError on shape disagreement.
Eigen::MatrixXd diag_forward(const DiagonalLinearNet& net, const Eigen::MatrixXd& X);

// Returns the n x O matrix with entries sum_h v_{o,h} * max(<w_h, x_i>, 0).
// Throws DimensionError on shape disagreement.
Eigen::MatrixXd relu_forward(const ReluNet& net, const Eigen::MatrixXd& X);

// Splits every hidden unit into magnitude and direction. Throws
// DegenerateUnitError (listing the offending unit indices) if any hidden row
// has zero norm, since such units have no direction.
MagnitudeDirectionView to_magnitude_direction(const ReluNet& net);

// Rebuilds a ReLU net with unit-norm hidden rows equal to theta and readout
// equal to m; the reconstructed function matches the original network.
ReluNet from_magnitude_direction(const MagnitudeDirectionView& view);

// ---------------------------------------------------------------------------
// Masked mean-squared-error objective
// ---------------------------------------------------------------------------
//
// loss(f) = sum_o (1 / n_o) * sum_{i : mask(i,o)} (f_o(x_i) - Y(i,o))^2,
// where n_o counts the samples selected for output o. Without a mask every
// sample contributes to every output, so the loss is the sum over outputs of
// per-output mean squared errors (the plain MSE when O = 1). A mask column
// with no selected samples leaves that output's mean undefined and throws
// DegenerateObjectiveError. The ReLU derivative at exactly zero preactivation
// is taken to be zero.

double mse_loss(const DiagonalLinearNet& net, const Eigen::MatrixXd& X,
                const Eigen::MatrixXd& Y, const TaskMask* mask = nullptr);
double mse_loss(const ReluNet& net, const Eigen::MatrixXd& X,
                const Eigen::MatrixXd& Y, const TaskMask* mask = nullptr);

DiagGradients mse_gradients(const DiagonalLinearNet& net, const Eigen::MatrixXd& X,
                            const Eigen::MatrixXd& Y, const TaskMask* mask = nullptr);
ReluGradients mse_gradients(const ReluNet& net, const Eigen::MatrixXd& X,
                            const Eigen::MatrixXd& Y, const TaskMask* mask = nullptr);

// ---------------------------------------------------------------------------
// Initializers (deterministic per seed)
// ---------------------------------------------------------------------------

// Fills all four parameter groups with the constant `scale` (>= 0). The
// symmetric pathways cancel exactly, so the initial effective beta is zero
// while small constant weights keep early gradient steps well-conditioned;
// small `scale` puts training in the sparsity-seeking regime.
DiagonalLinearNet init_diag(Eigen::Index D, Eigen::Index O, double scale,
                            std::uint64_t seed);

// Hidden entries i.i.d. N(0, hidden_scale^2), readout entries i.i.d.
// N(0, readout_scale^2). The conventional fan-in choice hidden_scale =
// sqrt(2/D) gives hidden rows expected squared norm 2.
ReluNet init_relu(Eigen::Index D, Eigen::Index H, Eigen::Index O,
                  double hidden_scale, double readout_scale, std::uint64_t seed);

// Conventional default scales for init_relu.
double default_hidden_scale(Eigen::Index D);
double default_readout_scale(Eigen::Index H);

}  // namespace mtlft::nets
