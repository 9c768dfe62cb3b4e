#ifndef AVBCI_LONGITUDINAL_HPP
#define AVBCI_LONGITUDINAL_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "avbci/qpsolve.hpp"
#include "avbci/stats.hpp"

namespace avbci {

/// One subject's training block: session rows (in order) of the delta
/// features, the next-session score, and its above-chance label.
struct SubjectSeries {
  std::string subject;
  Eigen::MatrixXd x;   // S_train x f, raw (unstandardized)
  double y = 0.0;      // target-session score, percent
  bool label = false;  // y > chance (strict)
};

/// Per-column feature scaling and target scaling fitted on training subjects.
struct Standardizer {
  Eigen::VectorXd mean;  // per feature column, pooled over subjects x sessions
  Eigen::VectorXd sd;
  double y_mean = 0.0;
  double y_sd = 1.0;
};

Standardizer fit_standardizer(const std::vector<SubjectSeries>& series);
Eigen::MatrixXd standardize_x(const Standardizer& s, const Eigen::MatrixXd& x);

/// Builds one series per subject from the delta table and the scores:
/// X from sessions 1..S_train (manifest order), y = score at session
/// S_train+1, label = y > chance.
std::vector<SubjectSeries> assemble_design(const DeltaTable& deltas,
                                           const ParameterCouple& couple,
                                           const std::vector<std::string>& session_order,
                                           const std::map<std::string, std::map<std::string, double>>& scores,
                                           double chance);

/// G_ij = beta' X_i X_j' beta (Gram matrix of the projected vectors X_i'beta).
Eigen::MatrixXd gram(const std::vector<Eigen::MatrixXd>& x, const Eigen::VectorXd& beta);

enum class ModelKind { Lsvr, Lsvc, Svr, Svc };
ModelKind model_kind_from_string(const std::string& s);
const char* to_string(ModelKind kind);

struct LongitudinalHyper {
  double c = 1.0;
  double epsilon = 0.1;  // regression only, standardized-target units
  double lambda = 1.0;   // beta-update regularization
  int max_outer = 50;
  double tol = 1e-6;
  /// When set, beta is pinned to this vector and never updated (used for
  /// reduction checks; beta[0] must be 1).
  std::optional<Eigen::VectorXd> fix_beta;
};

struct LongitudinalModel {
  ModelKind kind = ModelKind::Lsvr;
  Eigen::VectorXd beta;  // beta[0] == 1
  Eigen::VectorXd dual;  // theta (gamma*-gamma) for LSVR, alpha_i*y_i for LSVC
  double b = 0.0;
  LongitudinalHyper hyper;
  Standardizer scaler;
  std::vector<Eigen::MatrixXd> train_x;  // standardized training matrices, all subjects
  std::vector<int> support;              // subjects with nonzero dual weight
  int iterations = 0;
  bool converged = false;
  std::vector<Eigen::VectorXd> beta_trajectory;
  /// (objective at previous beta, objective after the update), one pair per
  /// beta step; the update can only decrease it.
  std::vector<std::pair<double, double>> beta_step_objectives;
};

/// Alternating fit: epsilon-SVR dual over G(beta), then the regularized
/// linear beta-update (beta[0] pinned to 1), until the relative beta change
/// falls under tol. Needs >= 3 subjects.
LongitudinalModel lsvr_fit(const std::vector<SubjectSeries>& series, const LongitudinalHyper& hyper);
/// Same alternation with the soft-margin classifier dual; labels are
/// (y > chance) mapped to +/-1. Throws if only one class is present.
LongitudinalModel lsvc_fit(const std::vector<SubjectSeries>& series, const LongitudinalHyper& hyper);

/// De-standardized percent prediction, clipped to [0, 100].
double lsvr_predict(const LongitudinalModel& model, const Eigen::MatrixXd& x_new);
/// Raw decision value (sign gives the class; ties resolve positive).
double lsvc_decision(const LongitudinalModel& model, const Eigen::MatrixXd& x_new);
bool lsvc_predict(const LongitudinalModel& model, const Eigen::MatrixXd& x_new);

/// Baselines without temporal modeling: standard SVR/SVC on the per-subject
/// session-mean feature vector (same standardization treatment).
struct BaselineModel {
  ModelKind kind = ModelKind::Svr;
  SvrModel svr;
  SvcModel svc;
  Standardizer scaler;
  double c = 1.0;
  double epsilon = 0.1;
};

BaselineModel baseline_svr_fit(const std::vector<SubjectSeries>& series, double c, double epsilon);
BaselineModel baseline_svc_fit(const std::vector<SubjectSeries>& series, double c);
double baseline_svr_predict(const BaselineModel& model, const Eigen::MatrixXd& x_new);
bool baseline_svc_predict(const BaselineModel& model, const Eigen::MatrixXd& x_new);

/// Per-subject random permutation of the session rows (targets untouched),
/// seeded and reproducible.
std::vector<SubjectSeries> shuffle_sessions_control(const std::vector<SubjectSeries>& series,
                                                    std::uint64_t seed);

struct HyperGrid {
  std::vector<double> c{0.1, 1.0, 10.0, 100.0};
  std::vector<double> epsilon{0.1, 1.0, 5.0};  // regression only
  std::vector<double> lambda{0.1, 1.0, 10.0};  // longitudinal only
};

struct FoldResult {
  std::string subject;
  double actual = 0.0;
  double predicted = 0.0;        // score for regression, decision value for classification
  bool actual_label = false;
  bool predicted_label = false;
  LongitudinalHyper hyper;       // winning hyperparameters of the fold
  Eigen::VectorXd beta;          // empty for baselines
  bool failed = false;
  std::string error;
};

struct LooReport {
  ModelKind kind = ModelKind::Lsvr;
  std::vector<FoldResult> folds;
  double rmse = 0.0;       // regression kinds
  double accuracy = 0.0;   // classification kinds
  int confusion[2][2] = {{0, 0}, {0, 0}};  // [actual][predicted], 1 = above chance
  int n_failed = 0;
};

/// Leave-one-subject-out evaluation with an inner leave-one-out grid search
/// on each fold's training subjects (ties resolve toward smaller C, then
/// smaller lambda, then smaller epsilon). The held-out subject never enters
/// standardization, hyperparameter selection, or the fit.
LooReport loo_evaluate(const std::vector<SubjectSeries>& series, ModelKind kind,
                       const HyperGrid& grid = {});

}  // namespace avbci

#endif
