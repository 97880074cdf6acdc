#include <doctest.h>

#include <cmath>
#include <random>

#include "pidnet/error.hpp"
#include "pidnet/net.hpp"

using namespace pidnet;

namespace {

// 0.5 * ||Y - T||^2 summed over the batch.
double half_sq(const Mlp& net, const FilmParams& film, const MatrixXd& X, const MatrixXd& C, const MatrixXd& T) {
  return 0.5 * (mlp_forward(net, film, X, C) - T).squaredNorm();
}

}  // namespace

TEST_CASE("zero network outputs zero") {
  const Mlp net = Mlp::zeros({4, 6, 6, 3});
  const VectorXd y = mlp_forward(net, VectorXd(VectorXd::Ones(4)));
  CHECK(y.size() == 3);
  CHECK(y.isZero(0.0));
}

TEST_CASE("single identity layer is the identity map") {
  Mlp net;
  net.layers.push_back({MatrixXd::Identity(3, 3), VectorXd::Zero(3)});
  const VectorXd x = (VectorXd(3) << 1.5, -2.0, 0.25).finished();
  CHECK(mlp_forward(net, x) == x);
}

TEST_CASE("parameter count and shape checks") {
  std::mt19937_64 rng(1);
  const Mlp net = Mlp::glorot({33, 20, 20, 20, 60}, rng);
  CHECK(net.param_count() == 33 * 20 + 20 + 20 * 20 + 20 + 20 * 20 + 20 + 20 * 60 + 60);
  Mlp bad = net;
  bad.layers[1].W = MatrixXd::Zero(20, 19);
  try {
    bad.check_shapes();
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
  }
  CHECK_THROWS_AS(mlp_forward(net, VectorXd(VectorXd::Ones(5))), ShapeError);
}

TEST_CASE("film_apply arithmetic") {
  FilmLayer f{MatrixXd::Zero(2, 1), VectorXd::Constant(2, 2.0), MatrixXd::Zero(2, 1), VectorXd::Constant(2, 1.0)};
  const VectorXd h = (VectorXd(2) << 1.0, -1.0).finished();
  const VectorXd c = VectorXd::Constant(1, 0.3);
  const VectorXd out = film_apply(h, c, f);
  CHECK(out(0) == 3.0);
  CHECK(out(1) == -1.0);

  FilmLayer id{MatrixXd::Zero(2, 1), VectorXd::Ones(2), MatrixXd::Zero(2, 1), VectorXd::Zero(2)};
  CHECK(film_apply(h, c, id) == h);

  FilmLayer shift{MatrixXd::Ones(2, 1), VectorXd::Ones(2), (MatrixXd(2, 1) << 1.0, -2.0).finished(), VectorXd::Zero(2)};
  const VectorXd s = film_apply(VectorXd::Zero(2), c, shift);
  CHECK(s(0) == doctest::Approx(0.3));
  CHECK(s(1) == doctest::Approx(-0.6));

  CHECK_THROWS_AS(film_apply(VectorXd::Zero(3), c, f), ShapeError);
}

TEST_CASE("identity FiLM leaves the network unchanged") {
  std::mt19937_64 rng(3);
  const Mlp net = Mlp::glorot({3, 5, 5, 2}, rng);
  const FilmParams id = FilmParams::identity(net, 1);
  const MatrixXd X = MatrixXd::Random(3, 4);
  const MatrixXd C = MatrixXd::Random(1, 4);
  CHECK((mlp_forward(net, id, X, C) - mlp_forward(net, X)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("backward matches central differences on a modulated network") {
  std::mt19937_64 rng(11);
  Mlp net = Mlp::glorot({4, 6, 6, 3}, rng);
  FilmParams film = FilmParams::for_mlp(net, 1, rng);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& f : film.layers) {
    for (Eigen::Index i = 0; i < f.bg.size(); ++i) f.bg(i) += u(rng);
    for (Eigen::Index i = 0; i < f.bb.size(); ++i) f.bb(i) = u(rng);
  }
  const MatrixXd X = MatrixXd::Random(4, 5);
  const MatrixXd C = MatrixXd::Random(1, 5);
  const MatrixXd T = MatrixXd::Random(3, 5);

  ForwardCache cache;
  const MatrixXd Y = mlp_forward(net, film, X, C, &cache);
  const Gradients g = backward(net, film, Y - T, cache);

  std::vector<double> flat, grad;
  append_params(net, flat);
  append_params(film, flat);
  append_params(g.net, grad);
  append_params(g.film, grad);
  REQUIRE(flat.size() == grad.size());

  const double h = 1e-6;
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < flat.size(); ++k) {
    auto eval = [&](double delta) {
      std::vector<double> p = flat;
      p[k] += delta;
      Mlp n2 = net;
      FilmParams f2 = film;
      const std::size_t off = load_params(n2, p.data(), p.size(), 0);
      load_params(f2, p.data(), p.size(), off);
      return half_sq(n2, f2, X, C, T);
    };
    const double fd = (eval(h) - eval(-h)) / (2.0 * h);
    num += (fd - grad[k]) * (fd - grad[k]);
    den += fd * fd;
  }
  CHECK(std::sqrt(num / den) < 1e-5);

  // input gradients
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    MatrixXd Xp = X, Xm = X;
    Xp(i, 2) += h;
    Xm(i, 2) -= h;
    const double fd = (half_sq(net, film, Xp, C, T) - half_sq(net, film, Xm, C, T)) / (2.0 * h);
    CHECK(fd == doctest::Approx(g.dX(i, 2)).epsilon(1e-6));
  }
}

TEST_CASE("gradient of an unused parameter is exactly zero") {
  std::mt19937_64 rng(5);
  const Mlp net = Mlp::glorot({2, 4, 2}, rng);
  ForwardCache cache;
  const MatrixXd X = MatrixXd::Random(2, 3);
  const MatrixXd Y = mlp_forward(net, X, &cache);
  MatrixXd dY = MatrixXd::Zero(2, 3);
  dY.row(0) = Y.row(0);
  const Gradients g = backward(net, FilmParams{}, dY, cache);
  CHECK(g.net.layers[1].W.row(1).isZero(0.0));
  CHECK(g.net.layers[1].b(1) == 0.0);
}

TEST_CASE("stale cache is rejected") {
  std::mt19937_64 rng(6);
  Mlp net = Mlp::glorot({2, 3, 1}, rng);
  ForwardCache cache;
  const MatrixXd Y = mlp_forward(net, MatrixXd(MatrixXd::Ones(2, 1)), &cache);
  net.layers[0].W(0, 0) += 1.0;
  CHECK_THROWS_AS(backward(net, FilmParams{}, Y, cache), ShapeError);
}

TEST_CASE("forward determinism and saturation safety") {
  std::mt19937_64 rng(7);
  const Mlp net = Mlp::glorot({8, 20, 20, 4}, rng);
  const MatrixXd X = MatrixXd::Random(8, 16);
  CHECK(mlp_forward(net, X) == mlp_forward(net, X));
  const MatrixXd big = 1e3 * MatrixXd::Ones(8, 2);
  ForwardCache cache;
  const MatrixXd Y = mlp_forward(net, big, &cache);
  CHECK(Y.allFinite());
  CHECK(backward(net, FilmParams{}, Y, cache).dX.allFinite());
}

TEST_CASE("Adam first step, zero gradient and schedule") {
  AdamConfig cfg;
  AdamState s(cfg, 3);
  VectorXd p = (VectorXd(3) << 1.0, 2.0, 3.0).finished();
  const VectorXd g = (VectorXd(3) << 0.5, -4.0, 1e-3).finished();
  const VectorXd before = p;
  adam_step(s, p, g);
  for (int i = 0; i < 3; ++i) {
    const double d = p(i) - before(i);
    CHECK(d * g(i) < 0.0);
    CHECK(std::abs(d) <= cfg.learning_rate * (1.0 + 1e-12));
    CHECK(std::abs(d) >= cfg.learning_rate * (1.0 - 1e-4));
  }

  AdamState z(cfg, 3);
  VectorXd q = before;
  adam_step(z, q, VectorXd::Zero(3));
  CHECK(q == before);

  CHECK(scheduled_learning_rate(cfg, 0) == 1e-3);
  CHECK(scheduled_learning_rate(cfg, 1000) == doctest::Approx(1e-3 * 0.95).epsilon(1e-14));
  CHECK(scheduled_learning_rate(cfg, 3000) == doctest::Approx(1e-3 * std::pow(0.95, 3)).epsilon(1e-14));
  AdamConfig stair = cfg;
  stair.staircase = true;
  CHECK(scheduled_learning_rate(stair, 1999) == doctest::Approx(1e-3 * 0.95).epsilon(1e-14));

  VectorXd bad = g;
  bad(1) = std::nan("");
  try {
    adam_step(s, p, bad);
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}
