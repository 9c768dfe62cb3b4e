#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "avbci/qpsolve.hpp"
#include "avbci/rng.hpp"
#include "oracles.hpp"

using namespace avbci;

namespace {

Eigen::MatrixXd random_spsd(int n, std::mt19937_64& rng, bool rank_deficient) {
  const int inner = rank_deficient ? std::max(1, n - 1) : n;
  Eigen::MatrixXd a(n, inner);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < inner; ++c) a(r, c) = 2.0 * uniform_real(rng) - 1.0;
  }
  Eigen::MatrixXd q = a * a.transpose();
  return 0.5 * (q + q.transpose());
}

QpProblem random_problem(std::mt19937_64& rng, int n, bool with_equality) {
  QpProblem p;
  p.Q = random_spsd(n, rng, uniform_real(rng) < 0.3);
  p.c.resize(n);
  p.lower.resize(n);
  p.upper.resize(n);
  for (int i = 0; i < n; ++i) {
    p.c[i] = 4.0 * uniform_real(rng) - 2.0;
    p.lower[i] = -1.0 - uniform_real(rng);
    p.upper[i] = 1.0 + uniform_real(rng);
  }
  if (with_equality) {
    p.a.resize(n);
    for (int i = 0; i < n; ++i) p.a[i] = uniform_real(rng) < 0.5 ? -1.0 : 1.0;
    p.rhs = 0.5 * (2.0 * uniform_real(rng) - 1.0);
  }
  p.tolerance = 1e-8;
  return p;
}

}  // namespace

TEST_CASE("clamped 1-D minimum and the symmetric simplex case") {
  QpProblem p;
  p.Q = Eigen::MatrixXd::Constant(1, 1, 1.0);
  p.c = Eigen::VectorXd::Constant(1, -4.0);
  p.lower = Eigen::VectorXd::Constant(1, 0.0);
  p.upper = Eigen::VectorXd::Constant(1, 2.0);
  const auto sol = qp_solve(p);
  CHECK(sol.converged);
  CHECK(sol.x[0] == doctest::Approx(2.0).epsilon(1e-9));  // unconstrained optimum 4, clamped

  QpProblem simplex;
  simplex.Q = Eigen::MatrixXd::Identity(2, 2);
  simplex.c = Eigen::VectorXd::Zero(2);
  simplex.lower = Eigen::VectorXd::Zero(2);
  simplex.upper = Eigen::VectorXd::Ones(2);
  simplex.a = Eigen::VectorXd::Ones(2);
  simplex.rhs = 1.0;
  const auto ssol = qp_solve(simplex);
  CHECK(ssol.converged);
  CHECK(ssol.x[0] == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(ssol.x[1] == doctest::Approx(0.5).epsilon(1e-7));
}

TEST_CASE("validation: asymmetric Q, inverted bounds, infeasible equality") {
  QpProblem p;
  p.Q.resize(2, 2);
  p.Q << 1.0, 0.5, -0.5, 1.0;
  p.c = Eigen::VectorXd::Zero(2);
  p.lower = Eigen::VectorXd::Zero(2);
  p.upper = Eigen::VectorXd::Ones(2);
  CHECK_THROWS_AS(qp_solve(p), ValidationError);

  p.Q << 1.0, 0.5, 0.5, 1.0;
  p.lower[0] = 2.0;  // lower > upper
  CHECK_THROWS_AS(qp_solve(p), ValidationError);

  p.lower[0] = 0.0;
  p.a = Eigen::VectorXd::Ones(2);
  p.rhs = 5.0;  // max reachable is 2
  CHECK_THROWS_WITH_AS(qp_solve(p), doctest::Contains("infeasible"), ValidationError);
}

TEST_CASE("random problems match exhaustive active-set enumeration") {
  auto rng = make_rng(424243);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const bool with_eq = trial % 2 == 0;
    const QpProblem p = random_problem(rng, 4, with_eq);
    const auto sol = qp_solve(p);
    REQUIRE(sol.converged);
    CHECK(qp_kkt_residual(p, sol.x) < 1e-6);
    // feasibility
    for (int i = 0; i < 4; ++i) {
      CHECK(sol.x[i] >= p.lower[i] - 1e-9);
      CHECK(sol.x[i] <= p.upper[i] + 1e-9);
    }
    if (with_eq) CHECK(std::fabs(p.a.dot(sol.x) - p.rhs) < 1e-8);

    const auto best = oracles::active_set_optimum(p);
    REQUIRE(best.has_value());
    CHECK(sol.objective <= *best + 1e-6);
    CHECK(sol.objective >= *best - 1e-6);
    ++checked;
  }
  CHECK(checked == 200);
}

TEST_CASE("objective is non-increasing along the iteration path") {
  auto rng = make_rng(5);
  const QpProblem base = random_problem(rng, 5, true);
  double prev = std::numeric_limits<double>::infinity();
  for (int budget = 1; budget <= 40; ++budget) {
    QpProblem p = base;
    p.max_iterations = budget;
    const auto sol = qp_solve(p);
    CHECK(sol.objective <= prev + 1e-12);
    prev = sol.objective;
  }
}

TEST_CASE("deterministic solve path") {
  auto rng = make_rng(6);
  const QpProblem p = random_problem(rng, 6, true);
  const auto a = qp_solve(p);
  const auto b = qp_solve(p);
  CHECK(a.iterations == b.iterations);
  CHECK((a.x - b.x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("svc: two-point max margin, label flip, duplication") {
  Eigen::MatrixXd x(2, 1);
  x << 1.0, -1.0;
  Eigen::VectorXd y(2);
  y << 1.0, -1.0;
  const SvcModel model = svc_fit(x, y, 1000.0);
  CHECK(model.b == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(svc_decision(model, Eigen::VectorXd::Constant(1, 1.0)) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(svc_decision(model, Eigen::VectorXd::Constant(1, -1.0)) ==
        doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(svc_predict(model, Eigen::VectorXd::Zero(1)) == 1);  // tie resolves positive

  // label flip negates the decision function
  const SvcModel flipped = svc_fit(x, -y, 1000.0);
  for (double probe : {-0.7, 0.2, 1.5}) {
    CHECK(svc_decision(flipped, Eigen::VectorXd::Constant(1, probe)) ==
          doctest::Approx(-svc_decision(model, Eigen::VectorXd::Constant(1, probe))).epsilon(1e-5));
  }

  CHECK_THROWS_AS(svc_fit(x, Eigen::VectorXd::Ones(2), 1.0), ValidationError);  // single class
}

TEST_CASE("svc duplication with halved C keeps the decision function") {
  auto rng = make_rng(7);
  const int n = 6;
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = 2.0 * uniform_real(rng) - 1.0;
    x(i, 1) = 2.0 * uniform_real(rng) - 1.0;
    y[i] = i < n / 2 ? 1.0 : -1.0;
    x(i, 0) += y[i];  // make it separable-ish
  }
  const SvcModel base = svc_fit(x, y, 2.0);

  Eigen::MatrixXd x2(2 * n, 2);
  Eigen::VectorXd y2(2 * n);
  x2 << x, x;
  y2 << y, y;
  const SvcModel doubled = svc_fit(x2, y2, 1.0);
  for (int probe = 0; probe < 10; ++probe) {
    Eigen::VectorXd q(2);
    q << 2.0 * uniform_real(rng) - 1.0, 2.0 * uniform_real(rng) - 1.0;
    CHECK(svc_decision(doubled, q) == doctest::Approx(svc_decision(base, q)).epsilon(1e-4));
  }
}

TEST_CASE("svr: constant targets, collinear fit, translation equivariance") {
  Eigen::MatrixXd x(4, 1);
  x << 0.0, 1.0, 2.0, 3.0;
  const Eigen::VectorXd constant = Eigen::VectorXd::Constant(4, 5.5);
  const SvrModel flat = svr_fit(x, constant, 10.0, 0.5);
  for (double probe : {-1.0, 0.5, 4.0}) {
    CHECK(svr_predict(flat, Eigen::VectorXd::Constant(1, probe)) ==
          doctest::Approx(5.5).epsilon(1e-6));
  }

  Eigen::VectorXd y(4);
  y << 0.0, 2.0, 4.0, 6.0;  // y = 2x
  const SvrModel line = svr_fit(x, y, 1e4, 0.0);
  const double slope = svr_predict(line, Eigen::VectorXd::Constant(1, 2.0)) -
                       svr_predict(line, Eigen::VectorXd::Constant(1, 1.0));
  CHECK(slope == doctest::Approx(2.0).epsilon(1e-4));

  // shifting all targets shifts all predictions
  const SvrModel shifted = svr_fit(x, (y.array() + 7.0).matrix(), 1e4, 0.0);
  for (double probe : {0.0, 1.5, 3.0}) {
    CHECK(svr_predict(shifted, Eigen::VectorXd::Constant(1, probe)) ==
          doctest::Approx(svr_predict(line, Eigen::VectorXd::Constant(1, probe)) + 7.0)
              .epsilon(1e-4));
  }
}

TEST_CASE("svr interior support vectors sit on the tube boundary") {
  auto rng = make_rng(8);
  const int n = 10;
  Eigen::MatrixXd x(n, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = i * 0.3;
    y[i] = 1.5 * x(i, 0) + 0.2 * (2.0 * uniform_real(rng) - 1.0);
  }
  const double c = 5.0, eps = 0.15;
  const SvrModel model = svr_fit(x, y, c, eps);
  const double sv_eps = 1e-6 * c;
  // reconstruct per-sample duals from the stored coefficients
  for (std::size_t s = 0; s < model.support.size(); ++s) {
    const double theta = model.coefficients[static_cast<int>(s)];
    if (std::fabs(theta) > sv_eps && std::fabs(theta) < c - sv_eps) {
      const int i = model.support[s];
      const double pred = svr_predict(model, x.row(i).transpose());
      CHECK(std::fabs(y[i] - pred) == doctest::Approx(eps).epsilon(1e-3));
    }
  }
}

TEST_CASE("small svc/svr duals match the exhaustive QP optimum") {
  auto rng = make_rng(909);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 4;
    Eigen::MatrixXd x(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      x(i, 0) = 2.0 * uniform_real(rng) - 1.0;
      x(i, 1) = 2.0 * uniform_real(rng) - 1.0;
      y[i] = i % 2 == 0 ? 1.0 : -1.0;
    }
    const double c = 3.0;
    QpProblem p;
    const Eigen::MatrixXd kernel = x * x.transpose();
    p.Q = kernel.array() * (y * y.transpose()).array();
    p.c = Eigen::VectorXd::Constant(n, -1.0);
    p.lower = Eigen::VectorXd::Zero(n);
    p.upper = Eigen::VectorXd::Constant(n, c);
    p.a = y;
    p.rhs = 0.0;
    p.tolerance = 1e-9;
    const auto sol = qp_solve(p);
    const auto best = oracles::active_set_optimum(p);
    REQUIRE(best.has_value());
    CHECK(sol.objective == doctest::Approx(*best).epsilon(1e-6));
  }
}
