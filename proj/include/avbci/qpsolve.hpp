#ifndef AVBCI_QPSOLVE_HPP
#define AVBCI_QPSOLVE_HPP

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "avbci/errors.hpp"

namespace avbci {

/// min 1/2 x'Qx + c'x  subject to  lower <= x <= upper  and optionally
/// a'x = rhs (a empty means no equality constraint).
struct QpProblem {
  Eigen::MatrixXd Q;
  Eigen::VectorXd c;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  Eigen::VectorXd a;  // empty => no equality constraint
  double rhs = 0.0;
  double tolerance = 1e-6;
  int max_iterations = 100000;
  /// Optional starting iterate; clipped to the box and repaired onto the
  /// equality before use. Empty = cold start from the projected origin.
  Eigen::VectorXd initial;
};

struct QpSolution {
  Eigen::VectorXd x;
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Pairwise-coordinate (SMO-style) solver: two variables move jointly to
/// preserve the equality, clipped to their boxes; without an equality each
/// variable is minimized alone. The maximal KKT-violating pair is always
/// selected, so the iteration is deterministic and the objective never
/// increases. Throws ValidationError on an infeasible problem; returns the
/// best iterate with converged=false when the iteration budget runs out.
QpSolution qp_solve(const QpProblem& problem);

double qp_objective(const QpProblem& problem, const Eigen::VectorXd& x);
/// Max KKT violation of x (stationarity with the best multiplier, bound
/// feasibility directions); used by tests as an independent optimality check.
double qp_kkt_residual(const QpProblem& problem, const Eigen::VectorXd& x);

/// epsilon-insensitive regression dual over an arbitrary PSD kernel matrix.
/// theta_i = gamma*_i - gamma_i; f(x) = sum_i theta_i K(x_i, x) + b.
struct KernelSvrResult {
  Eigen::VectorXd theta;
  double b = 0.0;
  bool converged = false;
};
/// `warm_theta` (a previous solution's theta) seeds the iteration.
KernelSvrResult svr_dual(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& targets, double c,
                         double epsilon, double tolerance = 1e-8, int max_iterations = 200000,
                         const Eigen::VectorXd* warm_theta = nullptr);

/// Soft-margin classifier dual over an arbitrary PSD kernel matrix.
/// coef_i = alpha_i * y_i; f(x) = sum_i coef_i K(x_i, x) + b.
struct KernelSvcResult {
  Eigen::VectorXd coef;
  double b = 0.0;
  bool converged = false;
};
KernelSvcResult svc_dual(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& labels, double c,
                         double tolerance = 1e-8, int max_iterations = 200000,
                         const Eigen::VectorXd* warm_coef = nullptr);

/// Linear support vector classifier trained via the soft-margin dual.
struct SvcModel {
  Eigen::MatrixXd support_x;      // support vectors (rows)
  Eigen::VectorXd coefficients;   // alpha_i * y_i per support vector
  std::vector<int> support;       // indices into the training set
  double b = 0.0;
  double c_param = 0.0;
};

/// Linear epsilon-insensitive support vector regression.
struct SvrModel {
  Eigen::MatrixXd support_x;
  Eigen::VectorXd coefficients;  // gamma*_i - gamma_i per support vector
  std::vector<int> support;
  double b = 0.0;
  double c_param = 0.0;
  double epsilon = 0.0;
};

/// labels must be -1/+1 with both classes present.
SvcModel svc_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& labels, double c,
                 double tolerance = 1e-8, int max_iterations = 200000);
SvrModel svr_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& targets, double c,
                 double epsilon, double tolerance = 1e-8, int max_iterations = 200000);

double svc_decision(const SvcModel& model, const Eigen::VectorXd& x);
/// Sign of the decision value; ties (f == 0) resolve to +1.
int svc_predict(const SvcModel& model, const Eigen::VectorXd& x);
double svr_predict(const SvrModel& model, const Eigen::VectorXd& x);

}  // namespace avbci

#endif
