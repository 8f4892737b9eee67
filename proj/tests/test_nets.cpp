#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "helpers.hpp"
#include "mtlft/checkpoint.hpp"
#include "mtlft/nets.hpp"

using namespace mtlft;
using namespace mtlft::nets;

namespace {

void check_rel(double got, double want, double rel) {
  INFO("got " << got << " want " << want);
  if (want == 0.0)
    CHECK(std::abs(got) <= rel);
  else
    CHECK(std::abs(got - want) <= rel * std::abs(want));
}

DiagonalLinearNet random_diag(Eigen::Index D, Eigen::Index O, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  DiagonalLinearNet net;
  net.w_plus = Eigen::VectorXd::NullaryExpr(D, [&] { return g(rng); });
  net.w_minus = Eigen::VectorXd::NullaryExpr(D, [&] { return g(rng); });
  net.v_plus = Eigen::MatrixXd::NullaryExpr(O, D, [&] { return g(rng); });
  net.v_minus = Eigen::MatrixXd::NullaryExpr(O, D, [&] { return g(rng); });
  return net;
}

ReluNet random_relu(Eigen::Index D, Eigen::Index H, Eigen::Index O,
                    std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  ReluNet net;
  net.hidden = Eigen::MatrixXd::NullaryExpr(H, D, [&] { return g(rng); });
  net.readout = Eigen::MatrixXd::NullaryExpr(O, H, [&] { return g(rng); });
  return net;
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  return Eigen::MatrixXd::NullaryExpr(r, c, [&] { return g(rng); });
}

}  // namespace

TEST_SUITE_BEGIN("nets");

TEST_CASE("effective beta: cancellation, single pathway, linearity") {
  std::mt19937_64 rng(11);
  DiagonalLinearNet net = random_diag(6, 2, rng);

  SUBCASE("identical pathways cancel exactly") {
    net.w_minus = net.w_plus;
    net.v_minus = net.v_plus;
    CHECK(effective_beta(net).isZero(0.0));
  }
  SUBCASE("minus pathway zeroed leaves the plus product") {
    net.w_minus.setZero();
    net.v_minus.setZero();
    const Eigen::MatrixXd beta = effective_beta(net);
    for (Eigen::Index o = 0; o < 2; ++o)
      for (Eigen::Index d = 0; d < 6; ++d)
        CHECK(beta(o, d) == net.v_plus(o, d) * net.w_plus(d));
  }
  SUBCASE("beta is linear in each pathway's hidden weights") {
    const Eigen::MatrixXd base = effective_beta(net);
    DiagonalLinearNet scaled = net;
    scaled.w_plus *= 3.0;
    scaled.w_minus *= 3.0;
    // Scaling both hidden pathways by a scales beta(a*w, v) linearly.
    const Eigen::MatrixXd tripled = effective_beta(scaled);
    CHECK((tripled - 3.0 * base).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("diag forward: zero net, ones net, two-path equivalence") {
  std::mt19937_64 rng(12);
  const Eigen::MatrixXd X = random_matrix(7, 5, rng);

  DiagonalLinearNet zero;
  zero.w_plus = zero.w_minus = Eigen::VectorXd::Zero(5);
  zero.v_plus = zero.v_minus = Eigen::MatrixXd::Zero(1, 5);
  CHECK(diag_forward(zero, X).isZero(0.0));

  DiagonalLinearNet ones = zero;
  ones.w_plus.setOnes();
  ones.v_plus.setOnes();
  const Eigen::MatrixXd out = diag_forward(ones, X);
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    check_rel(out(i, 0), X.row(i).sum(), 1e-14);

  DiagonalLinearNet net = random_diag(5, 2, rng);
  Eigen::MatrixXd beta(2, 5);
  for (Eigen::Index o = 0; o < 2; ++o)
    for (Eigen::Index d = 0; d < 5; ++d)
      beta(o, d) = net.v_plus(o, d) * net.w_plus(d) - net.v_minus(o, d) * net.w_minus(d);
  const Eigen::MatrixXd want = X * beta.transpose();
  const Eigen::MatrixXd got = diag_forward(net, X);
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(diag_forward(net, random_matrix(3, 4, rng)), DimensionError);
}

TEST_CASE("relu forward: inactive units, single unit, dimension checks") {
  ReluNet net;
  net.hidden = Eigen::MatrixXd::Identity(3, 3);
  net.readout = Eigen::MatrixXd::Ones(1, 3);

  Eigen::MatrixXd X(1, 3);
  X << -1.0, -2.0, -0.5;  // every preactivation negative
  CHECK(relu_forward(net, X).isZero(0.0));

  ReluNet single;
  single.hidden = Eigen::MatrixXd::Zero(1, 3);
  single.hidden(0, 0) = 1.0;
  single.readout = Eigen::MatrixXd::Ones(1, 1);
  Eigen::MatrixXd e1 = Eigen::MatrixXd::Zero(1, 3);
  e1(0, 0) = 1.0;
  CHECK(relu_forward(single, e1)(0, 0) == 1.0);

  CHECK_THROWS_AS(relu_forward(net, Eigen::MatrixXd::Zero(2, 5)), DimensionError);
}

TEST_CASE("relu forward: positive homogeneity over random nets") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    ReluNet net = random_relu(4, 6, 2, rng);
    const Eigen::MatrixXd X = random_matrix(9, 4, rng);
    const Eigen::MatrixXd base = relu_forward(net, X);
    for (double alpha : {0.1, 1.0, 10.0}) {
      ReluNet scaled = net;
      const Eigen::Index h = trial % net.units();
      scaled.hidden.row(h) *= alpha;
      scaled.readout.col(h) /= alpha;
      const Eigen::MatrixXd out = relu_forward(scaled, X);
      CHECK((out - base).cwiseAbs().maxCoeff() <=
            1e-12 * std::max(1.0, base.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("magnitude-direction view: gauge fixing and round trip") {
  std::mt19937_64 rng(14);

  SUBCASE("unit-norm hidden rows are already in canonical form") {
    ReluNet net = random_relu(5, 4, 1, rng);
    for (Eigen::Index h = 0; h < 4; ++h) net.hidden.row(h).normalize();
    const auto view = to_magnitude_direction(net);
    CHECK((view.m - net.readout).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((view.theta - net.hidden).cwiseAbs().maxCoeff() < 1e-14);
  }

  SUBCASE("rescaling a unit leaves the view unchanged") {
    ReluNet net = random_relu(5, 4, 2, rng);
    const auto before = to_magnitude_direction(net);
    net.hidden.row(2) *= 2.0;
    net.readout.col(2) /= 2.0;
    const auto after = to_magnitude_direction(net);
    CHECK((before.m - after.m).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((before.theta - after.theta).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("round trip reproduces the network function") {
    for (int trial = 0; trial < 20; ++trial) {
      ReluNet net = random_relu(6, 8, 2, rng);
      const auto view = to_magnitude_direction(net);
      for (Eigen::Index h = 0; h < view.theta.rows(); ++h)
        CHECK(std::abs(view.theta.row(h).norm() - 1.0) <= 1e-12);
      const ReluNet rebuilt = from_magnitude_direction(view);
      const Eigen::MatrixXd X = random_matrix(16, 6, rng);
      const Eigen::MatrixXd a = relu_forward(net, X);
      const Eigen::MatrixXd b = relu_forward(rebuilt, X);
      CHECK((a - b).cwiseAbs().maxCoeff() <=
            1e-10 * std::max(1.0, a.cwiseAbs().maxCoeff()));
    }
  }

  SUBCASE("zero-norm rows are reported with their indices") {
    ReluNet net = random_relu(5, 4, 1, rng);
    net.hidden.row(1).setZero();
    net.hidden.row(3).setZero();
    try {
      to_magnitude_direction(net);
      FAIL("expected DegenerateUnitError");
    } catch (const DegenerateUnitError& e) {
      REQUIRE(e.indices.size() == 2);
      CHECK(e.indices[0] == 1);
      CHECK(e.indices[1] == 3);
    }
  }
}

TEST_CASE("mse loss and gradients: trivial cases") {
  std::mt19937_64 rng(15);

  SUBCASE("zero residuals give zero gradients") {
    DiagonalLinearNet net = random_diag(4, 1, rng);
    const Eigen::MatrixXd X = random_matrix(6, 4, rng);
    const Eigen::MatrixXd Y = diag_forward(net, X);
    const auto g = mse_gradients(net, X, Y);
    CHECK(g.loss == 0.0);
    CHECK(g.w_plus.isZero(0.0));
    CHECK(g.w_minus.isZero(0.0));
    CHECK(g.v_plus.isZero(0.0));
    CHECK(g.v_minus.isZero(0.0));
  }

  SUBCASE("single linear unit, single sample, hand-computed gradient") {
    // One active ReLU unit behaves linearly: f = v * <w, x> with <w, x> > 0.
    ReluNet net;
    net.hidden = Eigen::MatrixXd::Zero(1, 2);
    net.hidden << 1.0, 0.5;
    net.readout = Eigen::MatrixXd::Constant(1, 1, 2.0);
    Eigen::MatrixXd X(1, 2), Y(1, 1);
    X << 1.0, 1.0;
    Y << 1.0;
    // pre = 1.5, f = 3, residual = 2; loss = 4.
    // d loss/d readout = 2*residual*pre = 6; d loss/d w = 2*residual*v*x = (8, 8).
    const auto g = mse_gradients(net, X, Y);
    check_rel(g.loss, 4.0, 1e-14);
    check_rel(g.readout(0, 0), 6.0, 1e-14);
    check_rel(g.hidden(0, 0), 8.0, 1e-14);
    check_rel(g.hidden(0, 1), 8.0, 1e-14);
  }

  SUBCASE("relu derivative at exactly zero preactivation is zero") {
    ReluNet net;
    net.hidden = Eigen::MatrixXd::Ones(1, 2);
    net.readout = Eigen::MatrixXd::Ones(1, 1);
    Eigen::MatrixXd X(1, 2), Y(1, 1);
    X << 1.0, -1.0;  // preactivation exactly zero
    Y << 1.0;
    const auto g = mse_gradients(net, X, Y);
    CHECK(g.hidden.isZero(0.0));
    CHECK(g.readout.isZero(0.0));  // activation is 0, so readout grad is 0 too
    check_rel(g.loss, 1.0, 1e-14);
  }

  SUBCASE("empty mask column is rejected") {
    DiagonalLinearNet net = random_diag(3, 2, rng);
    const Eigen::MatrixXd X = random_matrix(4, 3, rng);
    const Eigen::MatrixXd Y = random_matrix(4, 2, rng);
    TaskMask mask = TaskMask::Constant(4, 2, true);
    mask.col(1).setConstant(false);
    CHECK_THROWS_AS(mse_loss(net, X, Y, &mask), DegenerateObjectiveError);
    CHECK_THROWS_AS(mse_gradients(net, X, Y, &mask), DegenerateObjectiveError);
  }

  SUBCASE("mask averages each output over its own samples") {
    DiagonalLinearNet net = random_diag(3, 2, rng);
    const Eigen::MatrixXd X = random_matrix(5, 3, rng);
    const Eigen::MatrixXd Y = random_matrix(5, 2, rng);
    TaskMask mask(5, 2);
    mask.col(0) << true, true, true, false, false;
    mask.col(1) << false, false, false, true, true;
    const Eigen::MatrixXd pred = diag_forward(net, X);
    double want = 0.0;
    for (Eigen::Index i = 0; i < 3; ++i)
      want += std::pow(pred(i, 0) - Y(i, 0), 2) / 3.0;
    for (Eigen::Index i = 3; i < 5; ++i)
      want += std::pow(pred(i, 1) - Y(i, 1), 2) / 2.0;
    check_rel(mse_loss(net, X, Y, &mask), want, 1e-13);
  }
}

TEST_CASE("mse gradients match central finite differences") {
  std::mt19937_64 rng(16);
  const double fd_h = 1e-6;
  auto fd_check = [&](double analytic, double plus, double minus) {
    const double fd = (plus - minus) / (2.0 * fd_h);
    const double scale = std::max({1e-8, std::abs(analytic), std::abs(fd)});
    INFO("analytic " << analytic << " fd " << fd);
    CHECK(std::abs(analytic - fd) <= 1e-5 * scale);
  };

  SUBCASE("diagonal nets, with and without mask") {
    for (int trial = 0; trial < 8; ++trial) {
      const Eigen::Index D = 4 + trial % 4, O = 1 + trial % 2, n = 6;
      DiagonalLinearNet net = random_diag(D, O, rng);
      const Eigen::MatrixXd X = random_matrix(n, D, rng);
      const Eigen::MatrixXd Y = random_matrix(n, O, rng);
      TaskMask mask = TaskMask::Constant(n, O, true);
      if (O == 2) mask.col(0).head(2).setConstant(false);
      const TaskMask* m = (trial % 2) ? &mask : nullptr;
      const auto g = mse_gradients(net, X, Y, m);
      check_rel(g.loss, mse_loss(net, X, Y, m), 1e-13);
      for (Eigen::Index d = 0; d < D; ++d) {
        DiagonalLinearNet p = net, q = net;
        p.w_plus[d] += fd_h;
        q.w_plus[d] -= fd_h;
        fd_check(g.w_plus[d], mse_loss(p, X, Y, m), mse_loss(q, X, Y, m));
        p = net, q = net;
        p.w_minus[d] += fd_h;
        q.w_minus[d] -= fd_h;
        fd_check(g.w_minus[d], mse_loss(p, X, Y, m), mse_loss(q, X, Y, m));
        for (Eigen::Index o = 0; o < O; ++o) {
          p = net, q = net;
          p.v_plus(o, d) += fd_h;
          q.v_plus(o, d) -= fd_h;
          fd_check(g.v_plus(o, d), mse_loss(p, X, Y, m), mse_loss(q, X, Y, m));
          p = net, q = net;
          p.v_minus(o, d) += fd_h;
          q.v_minus(o, d) -= fd_h;
          fd_check(g.v_minus(o, d), mse_loss(p, X, Y, m), mse_loss(q, X, Y, m));
        }
      }
    }
  }

  SUBCASE("relu nets") {
    for (int trial = 0; trial < 8; ++trial) {
      const Eigen::Index D = 3 + trial % 3, H = 4 + trial % 5, O = 1 + trial % 2;
      const Eigen::Index n = 7;
      ReluNet net = random_relu(D, H, O, rng);
      const Eigen::MatrixXd X = random_matrix(n, D, rng);
      const Eigen::MatrixXd Y = random_matrix(n, O, rng);
      const auto g = mse_gradients(net, X, Y);
      check_rel(g.loss, mse_loss(net, X, Y), 1e-13);
      for (Eigen::Index h = 0; h < H; ++h) {
        for (Eigen::Index d = 0; d < D; ++d) {
          ReluNet p = net, q = net;
          p.hidden(h, d) += fd_h;
          q.hidden(h, d) -= fd_h;
          fd_check(g.hidden(h, d), mse_loss(p, X, Y), mse_loss(q, X, Y));
        }
        for (Eigen::Index o = 0; o < O; ++o) {
          ReluNet p = net, q = net;
          p.readout(o, h) += fd_h;
          q.readout(o, h) -= fd_h;
          fd_check(g.readout(o, h), mse_loss(p, X, Y), mse_loss(q, X, Y));
        }
      }
    }
  }
}

TEST_CASE("initializers: determinism and scales") {
  SUBCASE("diag constant fill") {
    const auto net = init_diag(8, 2, 1e-6, 0);
    CHECK((net.w_plus.array() == 1e-6).all());
    CHECK((net.w_minus.array() == 1e-6).all());
    CHECK((net.v_plus.array() == 1e-6).all());
    CHECK((net.v_minus.array() == 1e-6).all());
    // Symmetric pathways: the effective coefficients start at exactly zero,
    // comfortably below the 1e-12 scale of the squared init.
    CHECK(effective_beta(net).cwiseAbs().maxCoeff() <= 1e-12);

    const auto zero = init_diag(8, 1, 0.0, 0);
    CHECK(zero.w_plus.isZero(0.0));
    CHECK(zero.v_plus.isZero(0.0));
    CHECK_THROWS_AS(init_diag(4, 1, -1.0, 0), DomainError);
  }

  SUBCASE("relu seeded draws") {
    const auto a = init_relu(10, 16, 2, 0.5, 0.1, 42);
    const auto b = init_relu(10, 16, 2, 0.5, 0.1, 42);
    CHECK(a.hidden == b.hidden);
    CHECK(a.readout == b.readout);
    const auto c = init_relu(10, 16, 2, 0.5, 0.1, 43);
    CHECK(a.hidden != c.hidden);

    const auto zero = init_relu(10, 16, 1, 0.0, 0.0, 7);
    CHECK(zero.hidden.isZero(0.0));
    CHECK(zero.readout.isZero(0.0));
    CHECK_THROWS_AS(init_relu(4, 4, 1, -0.5, 0.1, 0), DomainError);

    // Expected squared row norm is D * hidden_scale^2; check the empirical
    // mean over many units to Monte-Carlo accuracy.
    const auto big = init_relu(50, 4000, 1, 0.2, 0.1, 3);
    const double mean_sq = big.hidden.rowwise().squaredNorm().mean();
    check_rel(mean_sq, 50 * 0.04, 0.05);
    check_rel(default_hidden_scale(50), std::sqrt(2.0 / 50.0), 1e-15);
    check_rel(default_readout_scale(200), std::sqrt(2.0 / 200.0), 1e-15);
  }
}

TEST_CASE("checkpoints: round trips and error paths") {
  namespace fs = std::filesystem;
  std::mt19937_64 rng(17);
  const fs::path dir = fs::temp_directory_path() / "mtlft_ckpt_test";
  fs::create_directories(dir);

  SUBCASE("diag net round trip is bitwise") {
    DiagonalLinearNet net = random_diag(6, 2, rng);
    const fs::path p = dir / "diag.ckpt";
    io::save_diag_net(p, net, 99, "unit-test");
    const auto back = io::load_diag_net(p);
    CHECK(back.w_plus == net.w_plus);
    CHECK(back.w_minus == net.w_minus);
    CHECK(back.v_plus == net.v_plus);
    CHECK(back.v_minus == net.v_minus);
    const auto raw = io::load_checkpoint(p);
    CHECK(raw.kind == "diag_net");
    CHECK(raw.seed == 99);
    CHECK(raw.provenance == "unit-test");
    CHECK(raw.scalar("D") == 6.0);
    CHECK(raw.scalar("O") == 2.0);
  }

  SUBCASE("relu net and activations round trip") {
    ReluNet net = random_relu(5, 7, 1, rng);
    const fs::path p = dir / "relu.ckpt";
    io::save_relu_net(p, net, 7, "unit-test");
    const auto back = io::load_relu_net(p);
    CHECK(back.hidden == net.hidden);
    CHECK(back.readout == net.readout);

    const Eigen::MatrixXd X = random_matrix(12, 5, rng);
    const fs::path q = dir / "acts.ckpt";
    io::save_activations(q, X, 1, "probe responses");
    CHECK(io::load_activations(q) == X);
    CHECK_THROWS_AS(io::load_relu_net(q), IoError);  // kind mismatch
  }

  SUBCASE("corrupt files are rejected") {
    const fs::path missing = dir / "nope.ckpt";
    CHECK_THROWS_AS(io::load_checkpoint(missing), IoError);

    const fs::path bad = dir / "bad.ckpt";
    std::ofstream(bad) << "not a checkpoint\n{}\n";
    CHECK_THROWS_AS(io::load_checkpoint(bad), IoError);

    // Valid header but truncated payload.
    ReluNet net = random_relu(4, 4, 1, rng);
    const fs::path full = dir / "full.ckpt";
    io::save_relu_net(full, net, 0, "x");
    std::ifstream in(full, std::ios::binary);
    std::string contents((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
    in.close();
    const fs::path trunc = dir / "trunc.ckpt";
    std::ofstream(trunc, std::ios::binary)
        << contents.substr(0, contents.size() - 16);
    CHECK_THROWS_AS(io::load_checkpoint(trunc), IoError);
  }
}

TEST_SUITE_END();
