// Test-only oracles, deliberately independent of the library implementations
// they check: a column-by-column avalanche scanner, direct weighted-mean
// enumeration, a Monte Carlo sign-flip Wilcoxon, a dummy-coded ANCOVA solved
// by normal equations, and an exhaustive active-set QP enumerator.
#ifndef AVBCI_TESTS_ORACLES_HPP
#define AVBCI_TESTS_ORACLES_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "avbci/avalanche.hpp"
#include "avbci/qpsolve.hpp"
#include "avbci/rng.hpp"

namespace oracles {

struct Run {
  int start;
  int end;  // exclusive
};

// Maximal active runs found by independently testing every column: a column
// c starts a run iff it is active and (c == 0 or c-1 inactive); the run ends
// at the first inactive column.
inline std::vector<Run> brute_force_runs(const avbci::BinaryMatrix& m, int min_duration) {
  const int cols = static_cast<int>(m.cols());
  auto column_active = [&](int c) { return (m.col(c).array() != 0).any(); };
  std::vector<Run> runs;
  for (int c = 0; c < cols; ++c) {
    if (!column_active(c)) continue;
    if (c > 0 && column_active(c - 1)) continue;  // not a run start
    int end = c;
    while (end < cols && column_active(end)) ++end;
    if (end - c >= min_duration) runs.push_back({c, end});
  }
  return runs;
}

// Eq.-style weighted mean recomputed from scratch on the raw matrix.
inline double brute_force_weighted_mean(const avbci::BinaryMatrix& m,
                                        const std::vector<Run>& runs) {
  double num = 0.0, den = 0.0;
  for (const Run& run : runs) {
    long count = 0;
    for (int c = run.start; c < run.end; ++c) {
      for (int r = 0; r < m.rows(); ++r) count += m(r, c) ? 1 : 0;
    }
    const double len = run.end - run.start;
    num += static_cast<double>(count) * len;
    den += len;
  }
  return num / den;
}

// Monte Carlo two-sided p for the Wilcoxon signed-rank statistic: random
// sign patterns over the observed midranks.
inline double mc_wilcoxon_p(const std::vector<double>& x, const std::vector<double>& y,
                            int n_draws, std::uint64_t seed) {
  std::vector<double> abs_diffs;
  std::vector<double> diffs;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    if (d != 0.0) {
      diffs.push_back(d);
      abs_diffs.push_back(std::fabs(d));
    }
  }
  const std::size_t n = diffs.size();
  // midranks of |d|
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return abs_diffs[a] < abs_diffs[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && abs_diffs[order[j + 1]] == abs_diffs[order[i]]) ++j;
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  double w_pos = 0.0, total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    total += ranks[k];
    if (diffs[k] > 0) w_pos += ranks[k];
  }
  const double w_obs = std::min(w_pos, total - w_pos);

  auto rng = avbci::make_rng(seed);
  long hits = 0;
  for (int draw = 0; draw < n_draws; ++draw) {
    double wp = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (rng() & 1ULL) wp += ranks[k];
    }
    const double w = std::min(wp, total - wp);
    if (w <= w_obs + 1e-12) ++hits;
  }
  return static_cast<double>(hits) / n_draws;
}

// Repeated-measures correlation via an explicit dummy-coded least-squares
// ANCOVA: y ~ subject indicators + common slope * x, solved by normal
// equations.
struct AncovaResult {
  double r;
  int df;
  double f;
  double slope;
};

inline AncovaResult ancova_rmcorr(const std::vector<double>& x, const std::vector<double>& y,
                                  const std::vector<std::string>& ids) {
  std::map<std::string, int> subject_index;
  for (const auto& id : ids) subject_index.emplace(id, static_cast<int>(subject_index.size()));
  const int n = static_cast<int>(x.size());
  const int s = static_cast<int>(subject_index.size());

  Eigen::MatrixXd design(n, s + 1);
  design.setZero();
  Eigen::VectorXd target(n);
  for (int i = 0; i < n; ++i) {
    design(i, subject_index[ids[static_cast<std::size_t>(i)]]) = 1.0;
    design(i, s) = x[static_cast<std::size_t>(i)];
    target[i] = y[static_cast<std::size_t>(i)];
  }
  const Eigen::MatrixXd xtx = design.transpose() * design;
  const Eigen::VectorXd xty = design.transpose() * target;
  const Eigen::VectorXd beta = xtx.ldlt().solve(xty);
  const double rss_full = (target - design * beta).squaredNorm();

  // reduced model: subject indicators only
  const Eigen::MatrixXd d0 = design.leftCols(s);
  const Eigen::VectorXd beta0 = (d0.transpose() * d0).ldlt().solve(d0.transpose() * target);
  const double rss_reduced = (target - d0 * beta0).squaredNorm();

  AncovaResult res;
  res.slope = beta[s];
  const double ss_measure = std::max(0.0, rss_reduced - rss_full);
  res.df = n - s - 1;
  const double magnitude = std::sqrt(ss_measure / (ss_measure + rss_full));
  res.r = res.slope < 0 ? -magnitude : magnitude;
  res.f = ss_measure / (rss_full / res.df);
  return res;
}

// Exhaustive active-set enumeration for small box QPs with an optional
// single equality: every assignment of variables to {lower, free, upper} is
// solved for stationarity and checked for feasibility; the best feasible
// candidate is the optimum of the convex problem.
inline std::optional<double> active_set_optimum(const avbci::QpProblem& p) {
  const int n = static_cast<int>(p.Q.rows());
  const bool eq = p.a.size() != 0;
  double best = std::numeric_limits<double>::infinity();
  bool found = false;

  std::vector<int> state(static_cast<std::size_t>(n), 0);  // 0 lower, 1 free, 2 upper
  const long total = static_cast<long>(std::pow(3.0, n));
  for (long code = 0; code < total; ++code) {
    long rem = code;
    for (int i = 0; i < n; ++i) {
      state[static_cast<std::size_t>(i)] = static_cast<int>(rem % 3);
      rem /= 3;
    }
    std::vector<int> free_vars;
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) {
      if (state[static_cast<std::size_t>(i)] == 0) {
        x[i] = p.lower[i];
      } else if (state[static_cast<std::size_t>(i)] == 2) {
        x[i] = p.upper[i];
      } else {
        free_vars.push_back(i);
      }
    }

    const int nf = static_cast<int>(free_vars.size());
    const int dim = nf + (eq ? 1 : 0);
    if (dim > 0) {
      // stationarity over free vars (+ equality row): [Q_ff a_f; a_f' 0]
      Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(dim, dim);
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
      for (int r = 0; r < nf; ++r) {
        const int i = free_vars[static_cast<std::size_t>(r)];
        for (int c = 0; c < nf; ++c) kkt(r, c) = p.Q(i, free_vars[static_cast<std::size_t>(c)]);
        double fixed_term = 0.0;
        for (int j = 0; j < n; ++j) {
          if (state[static_cast<std::size_t>(j)] != 1) fixed_term += p.Q(i, j) * x[j];
        }
        rhs[r] = -p.c[i] - fixed_term;
        if (eq) kkt(r, nf) = p.a[i];
      }
      if (eq) {
        double fixed_ax = 0.0;
        for (int j = 0; j < n; ++j) {
          if (state[static_cast<std::size_t>(j)] != 1) fixed_ax += p.a[j] * x[j];
        }
        for (int c = 0; c < nf; ++c) kkt(nf, c) = p.a[free_vars[static_cast<std::size_t>(c)]];
        rhs[nf] = p.rhs - fixed_ax;
      }
      const Eigen::VectorXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);
      if (!sol.allFinite()) continue;
      if ((kkt * sol - rhs).cwiseAbs().maxCoeff() > 1e-7 * (1.0 + rhs.cwiseAbs().maxCoeff())) {
        continue;  // inconsistent pattern
      }
      for (int r = 0; r < nf; ++r) x[free_vars[static_cast<std::size_t>(r)]] = sol[r];
    }

    // feasibility
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      ok = x[i] >= p.lower[i] - 1e-8 && x[i] <= p.upper[i] + 1e-8;
    }
    if (ok && eq) ok = std::fabs(p.a.dot(x) - p.rhs) <= 1e-7 * (1.0 + std::fabs(p.rhs));
    if (!ok) continue;

    best = std::min(best, avbci::qp_objective(p, x));
    found = true;
  }
  if (!found) return std::nullopt;
  return best;
}

}  // namespace oracles

#endif
