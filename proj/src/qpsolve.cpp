#include "avbci/qpsolve.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace avbci {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class BoundState { Interior, AtLower, AtUpper };

BoundState bound_state(double x, double lo, double hi) {
  const double slack = 1e-12 * (1.0 + std::fabs(lo) + std::fabs(hi));
  if (x <= lo + slack) return BoundState::AtLower;
  if (x >= hi - slack) return BoundState::AtUpper;
  return BoundState::Interior;
}

void validate(const QpProblem& p) {
  const int n = static_cast<int>(p.Q.rows());
  if (p.Q.cols() != n) throw ValidationError("qp: Q must be square");
  if (p.c.size() != n || p.lower.size() != n || p.upper.size() != n) {
    throw ValidationError("qp: c/lower/upper sizes must match Q");
  }
  if (p.a.size() != 0 && p.a.size() != n) {
    throw ValidationError("qp: equality coefficient size must match Q or be empty");
  }
  const double scale = 1.0 + p.Q.cwiseAbs().maxCoeff();
  if ((p.Q - p.Q.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw ValidationError("qp: Q is not symmetric");
  }
  for (int i = 0; i < n; ++i) {
    if (!(p.lower[i] <= p.upper[i])) {
      throw ValidationError("qp: lower > upper at variable " + std::to_string(i));
    }
  }
  if (p.a.size() != 0) {
    double amin = 0.0, amax = 0.0;
    for (int i = 0; i < n; ++i) {
      const double ai = p.a[i];
      amin += ai > 0 ? ai * p.lower[i] : ai * p.upper[i];
      amax += ai > 0 ? ai * p.upper[i] : ai * p.lower[i];
    }
    const double slack = 1e-9 * (1.0 + std::fabs(p.rhs));
    if (p.rhs < amin - slack || p.rhs > amax + slack) {
      throw ValidationError("qp: infeasible (equality target outside reachable range)");
    }
  }
}

// Feasible start: clip the hint (or zero) into the box, then walk the
// equality deficit through variables with headroom.
Eigen::VectorXd feasible_start(const QpProblem& p) {
  const int n = static_cast<int>(p.Q.rows());
  Eigen::VectorXd x(n);
  const bool hinted = p.initial.size() == n;
  for (int i = 0; i < n; ++i) {
    x[i] = std::clamp(hinted ? p.initial[i] : 0.0, p.lower[i], p.upper[i]);
  }
  if (p.a.size() == 0) return x;

  double deficit = p.rhs - p.a.dot(x);
  for (int i = 0; i < n && std::fabs(deficit) > 1e-14 * (1.0 + std::fabs(p.rhs)); ++i) {
    const double ai = p.a[i];
    if (ai == 0.0) continue;
    double head;  // attainable increase of a_i x_i toward the deficit sign
    if (deficit > 0) {
      head = ai > 0 ? ai * (p.upper[i] - x[i]) : ai * (p.lower[i] - x[i]);
      const double take = std::min(deficit, head);
      x[i] += take / ai;
      deficit -= take;
    } else {
      head = ai > 0 ? ai * (p.lower[i] - x[i]) : ai * (p.upper[i] - x[i]);
      const double take = std::max(deficit, head);
      x[i] += take / ai;
      deficit -= take;
    }
  }
  if (std::fabs(p.rhs - p.a.dot(x)) > 1e-8 * (1.0 + std::fabs(p.rhs))) {
    throw ValidationError("qp: could not reach the equality target within bounds");
  }
  return x;
}

struct KktState {
  double residual = 0.0;
  int single = -1;                 // worst unconstrained-coordinate violator
  int pair_up = -1, pair_down = -1;  // worst equality-coupled pair
  double pair_gap = 0.0;
};

KktState assess(const QpProblem& p, const Eigen::VectorXd& x, const Eigen::VectorXd& g) {
  const int n = static_cast<int>(x.size());
  const bool eq = p.a.size() != 0;
  KktState s;

  // Variables outside the equality: plain projected-gradient violation.
  double single_viol = 0.0;
  for (int i = 0; i < n; ++i) {
    if (eq && p.a[i] != 0.0) continue;
    double v = 0.0;
    switch (bound_state(x[i], p.lower[i], p.upper[i])) {
      case BoundState::Interior: v = std::fabs(g[i]); break;
      case BoundState::AtLower: v = std::max(0.0, -g[i]); break;
      case BoundState::AtUpper: v = std::max(0.0, g[i]); break;
    }
    if (v > single_viol) {
      single_viol = v;
      s.single = i;
    }
  }

  // Equality-coupled variables: nu must satisfy lo_i <= nu <= hi_i per
  // variable, where a bound is open in the direction the variable can move.
  double max_lo = -kInf, min_hi = kInf;
  int arg_lo = -1, arg_hi = -1;
  if (eq) {
    for (int i = 0; i < n; ++i) {
      const double ai = p.a[i];
      if (ai == 0.0) continue;
      const double phi = -g[i] / ai;  // nu value making variable i stationary
      const BoundState state = bound_state(x[i], p.lower[i], p.upper[i]);
      const bool can_increase_ax =
          state == BoundState::Interior || (ai > 0 ? state == BoundState::AtLower : state == BoundState::AtUpper);
      const bool can_decrease_ax =
          state == BoundState::Interior || (ai > 0 ? state == BoundState::AtUpper : state == BoundState::AtLower);
      if (can_increase_ax && phi > max_lo) {
        max_lo = phi;
        arg_lo = i;
      }
      if (can_decrease_ax && phi < min_hi) {
        min_hi = phi;
        arg_hi = i;
      }
    }
  }

  double pair_viol = 0.0;
  double nu = 0.0;
  if (eq && arg_lo >= 0 && arg_hi >= 0) {
    if (max_lo > min_hi) {
      nu = 0.5 * (max_lo + min_hi);
      s.pair_up = arg_lo;
      s.pair_down = arg_hi;
      s.pair_gap = max_lo - min_hi;
    } else {
      nu = std::clamp(0.0, max_lo, min_hi);
    }
  } else if (eq) {
    nu = std::isfinite(max_lo) ? max_lo : (std::isfinite(min_hi) ? min_hi : 0.0);
  }
  if (eq) {
    for (int i = 0; i < n; ++i) {
      const double ai = p.a[i];
      if (ai == 0.0) continue;
      const double grad = g[i] + nu * ai;
      double v = 0.0;
      switch (bound_state(x[i], p.lower[i], p.upper[i])) {
        case BoundState::Interior: v = std::fabs(grad); break;
        case BoundState::AtLower: v = std::max(0.0, -grad); break;
        case BoundState::AtUpper: v = std::max(0.0, grad); break;
      }
      pair_viol = std::max(pair_viol, v);
    }
  }

  s.residual = std::max(single_viol, pair_viol);
  return s;
}

}  // namespace

double qp_objective(const QpProblem& problem, const Eigen::VectorXd& x) {
  return 0.5 * x.dot(problem.Q * x) + problem.c.dot(x);
}

double qp_kkt_residual(const QpProblem& problem, const Eigen::VectorXd& x) {
  const Eigen::VectorXd g = problem.Q * x + problem.c;
  return assess(problem, x, g).residual;
}

QpSolution qp_solve(const QpProblem& p) {
  validate(p);
  const bool eq = p.a.size() != 0;

  Eigen::VectorXd x = feasible_start(p);
  Eigen::VectorXd g = p.Q * x + p.c;

  QpSolution sol;
  int iter = 0;
  for (; iter < p.max_iterations; ++iter) {
    const KktState state = assess(p, x, g);
    if (state.residual < p.tolerance) {
      sol.converged = true;
      sol.kkt_residual = state.residual;
      break;
    }
    sol.kkt_residual = state.residual;

    // Prefer the move addressing the larger violation side.
    bool moved = false;
    if (state.pair_up >= 0) {
      const int i = state.pair_up, j = state.pair_down;
      const double ai = p.a[i], aj = p.a[j];
      // x_i += t/a_i, x_j -= t/a_j keeps a'x fixed; t > 0 is feasible by
      // construction of the up/down sets.
      const double slope = g[i] / ai - g[j] / aj;
      const double curv = p.Q(i, i) / (ai * ai) + p.Q(j, j) / (aj * aj) - 2.0 * p.Q(i, j) / (ai * aj);
      double t_hi_i = ai > 0 ? ai * (p.upper[i] - x[i]) : ai * (p.lower[i] - x[i]);
      double t_hi_j = aj > 0 ? aj * (x[j] - p.lower[j]) : aj * (x[j] - p.upper[j]);
      const double t_max = std::min(t_hi_i, t_hi_j);
      double t;
      if (curv > 1e-300) {
        t = std::clamp(-slope / curv, 0.0, t_max);
      } else {
        t = slope < 0 ? t_max : 0.0;
      }
      if (t > 0) {
        const double di = t / ai, dj = -t / aj;
        x[i] += di;
        x[j] += dj;
        g += di * p.Q.col(i) + dj * p.Q.col(j);
        moved = true;
      }
    }
    if (!moved && state.single >= 0) {
      const int i = state.single;
      double target;
      if (p.Q(i, i) > 1e-300) {
        target = std::clamp(x[i] - g[i] / p.Q(i, i), p.lower[i], p.upper[i]);
      } else {
        target = g[i] > 0 ? p.lower[i] : (g[i] < 0 ? p.upper[i] : x[i]);
      }
      const double d = target - x[i];
      if (d != 0.0) {
        x[i] = target;
        g += d * p.Q.col(i);
        moved = true;
      }
    }
    if (!moved) {
      // No movable direction improves: numerically stuck at the residual.
      break;
    }
  }

  sol.x = std::move(x);
  sol.iterations = iter;
  sol.objective = qp_objective(p, sol.x);
  if (sol.converged) sol.kkt_residual = assess(p, sol.x, p.Q * sol.x + p.c).residual;
  if (eq) {
    // keep the equality exact against drift from repeated updates
    const double drift = p.rhs - p.a.dot(sol.x);
    if (std::fabs(drift) > 1e-9 * (1.0 + std::fabs(p.rhs))) {
      throw NumericError("qp: equality drifted during iteration");
    }
  }
  return sol;
}

namespace {

double average_or_midpoint(const std::vector<double>& free_values, double lo, double hi) {
  if (!free_values.empty()) {
    double s = 0.0;
    for (double v : free_values) s += v;
    return s / static_cast<double>(free_values.size());
  }
  if (std::isfinite(lo) && std::isfinite(hi)) return 0.5 * (lo + hi);
  if (std::isfinite(lo)) return lo;
  if (std::isfinite(hi)) return hi;
  return 0.0;
}

}  // namespace

KernelSvcResult svc_dual(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& labels, double c,
                         double tolerance, int max_iterations, const Eigen::VectorXd* warm_coef) {
  const int n = static_cast<int>(kernel.rows());
  if (labels.size() != n) throw ValidationError("svc_dual: label count mismatch");
  if (!(c > 0)) throw ValidationError("svc_dual: C must be positive");
  bool has_pos = false, has_neg = false;
  for (int i = 0; i < n; ++i) {
    if (labels[i] == 1.0) {
      has_pos = true;
    } else if (labels[i] == -1.0) {
      has_neg = true;
    } else {
      throw ValidationError("svc_dual: labels must be -1 or +1");
    }
  }
  if (!has_pos || !has_neg) throw ValidationError("svc_dual: both classes must be present");

  QpProblem p;
  p.Q = kernel.array() * (labels * labels.transpose()).array();
  p.c = Eigen::VectorXd::Constant(n, -1.0);
  p.lower = Eigen::VectorXd::Zero(n);
  p.upper = Eigen::VectorXd::Constant(n, c);
  p.a = labels;
  p.rhs = 0.0;
  p.tolerance = tolerance;
  p.max_iterations = max_iterations;
  if (warm_coef && warm_coef->size() == n) {
    p.initial = warm_coef->cwiseAbs();  // alpha_i = |alpha_i y_i|
  }
  const QpSolution sol = qp_solve(p);

  const Eigen::VectorXd& alpha = sol.x;
  const double sv_eps = 1e-9 * c;
  const Eigen::VectorXd f0 = kernel * (alpha.array() * labels.array()).matrix();

  std::vector<double> free_b;
  double b_lo = -kInf, b_hi = kInf;
  for (int i = 0; i < n; ++i) {
    const double bi = labels[i] - f0[i];
    if (alpha[i] > sv_eps && alpha[i] < c - sv_eps) {
      free_b.push_back(bi);
    } else if (alpha[i] <= sv_eps) {
      // y_i (f0_i + b) >= 1
      if (labels[i] > 0) {
        b_lo = std::max(b_lo, 1.0 - f0[i]);
      } else {
        b_hi = std::min(b_hi, -1.0 - f0[i]);
      }
    } else {
      // y_i (f0_i + b) <= 1
      if (labels[i] > 0) {
        b_hi = std::min(b_hi, 1.0 - f0[i]);
      } else {
        b_lo = std::max(b_lo, -1.0 - f0[i]);
      }
    }
  }

  KernelSvcResult res;
  res.b = average_or_midpoint(free_b, b_lo, b_hi);
  res.coef = (alpha.array() * labels.array()).matrix();
  res.converged = sol.converged;
  return res;
}

SvcModel svc_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& labels, double c,
                 double tolerance, int max_iterations) {
  const Eigen::MatrixXd kernel = x * x.transpose();
  const KernelSvcResult dual = svc_dual(kernel, labels, c, tolerance, max_iterations);

  const int n = static_cast<int>(x.rows());
  const double sv_eps = 1e-9 * c;
  SvcModel model;
  model.b = dual.b;
  model.c_param = c;
  for (int i = 0; i < n; ++i) {
    if (std::fabs(dual.coef[i]) > sv_eps) model.support.push_back(i);
  }
  model.support_x.resize(static_cast<int>(model.support.size()), x.cols());
  model.coefficients.resize(static_cast<int>(model.support.size()));
  for (std::size_t s = 0; s < model.support.size(); ++s) {
    const int i = model.support[s];
    model.support_x.row(static_cast<int>(s)) = x.row(i);
    model.coefficients[static_cast<int>(s)] = dual.coef[i];
  }
  return model;
}

KernelSvrResult svr_dual(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& targets, double c,
                         double epsilon, double tolerance, int max_iterations,
                         const Eigen::VectorXd* warm_theta) {
  const int n = static_cast<int>(kernel.rows());
  if (targets.size() != n) throw ValidationError("svr_dual: target count mismatch");
  if (n < 2) throw ValidationError("svr_dual: needs >= 2 samples");
  if (!(c > 0)) throw ValidationError("svr_dual: C must be positive");
  if (epsilon < 0) throw ValidationError("svr_dual: epsilon must be >= 0");

  QpProblem p;
  p.Q.setZero(2 * n, 2 * n);
  p.Q.topLeftCorner(n, n) = kernel;
  p.Q.bottomRightCorner(n, n) = kernel;
  p.Q.topRightCorner(n, n) = -kernel;
  p.Q.bottomLeftCorner(n, n) = -kernel;
  p.c.resize(2 * n);
  p.c.head(n) = Eigen::VectorXd::Constant(n, epsilon) - targets;
  p.c.tail(n) = Eigen::VectorXd::Constant(n, epsilon) + targets;
  p.lower = Eigen::VectorXd::Zero(2 * n);
  p.upper = Eigen::VectorXd::Constant(2 * n, c);
  p.a.resize(2 * n);
  p.a.head(n).setOnes();
  p.a.tail(n) = Eigen::VectorXd::Constant(n, -1.0);
  p.rhs = 0.0;
  p.tolerance = tolerance;
  p.max_iterations = max_iterations;
  if (warm_theta && warm_theta->size() == n) {
    p.initial.setZero(2 * n);
    p.initial.head(n) = warm_theta->cwiseMax(0.0);
    p.initial.tail(n) = (-*warm_theta).cwiseMax(0.0);
  }
  const QpSolution sol = qp_solve(p);

  const Eigen::VectorXd gamma_star = sol.x.head(n);
  const Eigen::VectorXd gamma = sol.x.tail(n);
  const Eigen::VectorXd theta = gamma_star - gamma;
  const Eigen::VectorXd f0 = kernel * theta;
  const double sv_eps = 1e-9 * c;

  std::vector<double> free_b;
  double b_lo = -kInf, b_hi = kInf;
  for (int i = 0; i < n; ++i) {
    if (gamma_star[i] > sv_eps && gamma_star[i] < c - sv_eps) free_b.push_back(targets[i] - epsilon - f0[i]);
    if (gamma[i] > sv_eps && gamma[i] < c - sv_eps) free_b.push_back(targets[i] + epsilon - f0[i]);
    if (gamma_star[i] <= sv_eps) b_lo = std::max(b_lo, targets[i] - epsilon - f0[i]);
    if (gamma_star[i] >= c - sv_eps) b_hi = std::min(b_hi, targets[i] - epsilon - f0[i]);
    if (gamma[i] <= sv_eps) b_hi = std::min(b_hi, targets[i] + epsilon - f0[i]);
    if (gamma[i] >= c - sv_eps) b_lo = std::max(b_lo, targets[i] + epsilon - f0[i]);
  }

  KernelSvrResult res;
  res.b = average_or_midpoint(free_b, b_lo, b_hi);
  res.theta = theta;
  res.converged = sol.converged;
  return res;
}

SvrModel svr_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& targets, double c,
                 double epsilon, double tolerance, int max_iterations) {
  const Eigen::MatrixXd kernel = x * x.transpose();
  const KernelSvrResult dual = svr_dual(kernel, targets, c, epsilon, tolerance, max_iterations);

  const int n = static_cast<int>(x.rows());
  const double sv_eps = 1e-9 * c;
  SvrModel model;
  model.b = dual.b;
  model.c_param = c;
  model.epsilon = epsilon;
  for (int i = 0; i < n; ++i) {
    if (std::fabs(dual.theta[i]) > sv_eps) model.support.push_back(i);
  }
  model.support_x.resize(static_cast<int>(model.support.size()), x.cols());
  model.coefficients.resize(static_cast<int>(model.support.size()));
  for (std::size_t s = 0; s < model.support.size(); ++s) {
    const int i = model.support[s];
    model.support_x.row(static_cast<int>(s)) = x.row(i);
    model.coefficients[static_cast<int>(s)] = dual.theta[i];
  }
  return model;
}

double svc_decision(const SvcModel& model, const Eigen::VectorXd& x) {
  if (model.support_x.cols() != x.size()) throw ValidationError("svc: feature dimension mismatch");
  return model.coefficients.dot(model.support_x * x) + model.b;
}

int svc_predict(const SvcModel& model, const Eigen::VectorXd& x) {
  return svc_decision(model, x) >= 0.0 ? 1 : -1;
}

double svr_predict(const SvrModel& model, const Eigen::VectorXd& x) {
  if (model.support_x.cols() != x.size()) throw ValidationError("svr: feature dimension mismatch");
  return model.coefficients.dot(model.support_x * x) + model.b;
}

}  // namespace avbci
