#include "avbci/longitudinal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "avbci/rng.hpp"

namespace avbci {

namespace {

constexpr double kSvEps = 1e-10;

void validate_series(const std::vector<SubjectSeries>& series) {
  if (series.empty()) throw ValidationError("longitudinal: no subjects");
  const auto rows = series.front().x.rows();
  const auto cols = series.front().x.cols();
  if (rows < 1 || cols < 1) throw ValidationError("longitudinal: empty design matrix");
  for (const auto& s : series) {
    if (s.x.rows() != rows || s.x.cols() != cols) {
      throw ValidationError("longitudinal: subject " + s.subject + " has shape " +
                            std::to_string(s.x.rows()) + "x" + std::to_string(s.x.cols()) +
                            ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    }
  }
}

}  // namespace

Standardizer fit_standardizer(const std::vector<SubjectSeries>& series) {
  validate_series(series);
  const int f = static_cast<int>(series.front().x.cols());
  const long n_rows = static_cast<long>(series.size()) * series.front().x.rows();

  Standardizer s;
  s.mean = Eigen::VectorXd::Zero(f);
  s.sd = Eigen::VectorXd::Zero(f);
  for (const auto& subj : series) s.mean += subj.x.colwise().sum().transpose();
  s.mean /= static_cast<double>(n_rows);
  for (const auto& subj : series) {
    s.sd += (subj.x.rowwise() - s.mean.transpose()).array().square().colwise().sum().matrix().transpose();
  }
  if (n_rows > 1) s.sd /= static_cast<double>(n_rows - 1);
  s.sd = s.sd.array().sqrt();
  for (int j = 0; j < f; ++j) {
    if (!(s.sd[j] > 0)) s.sd[j] = 1.0;  // constant column carries no signal
  }

  double ym = 0.0;
  for (const auto& subj : series) ym += subj.y;
  ym /= static_cast<double>(series.size());
  double yv = 0.0;
  for (const auto& subj : series) yv += (subj.y - ym) * (subj.y - ym);
  if (series.size() > 1) yv /= static_cast<double>(series.size() - 1);
  s.y_mean = ym;
  s.y_sd = yv > 0 ? std::sqrt(yv) : 1.0;
  return s;
}

Eigen::MatrixXd standardize_x(const Standardizer& s, const Eigen::MatrixXd& x) {
  if (x.cols() != s.mean.size()) throw ValidationError("standardize: feature count mismatch");
  return ((x.rowwise() - s.mean.transpose()).array().rowwise() / s.sd.transpose().array()).matrix();
}

std::vector<SubjectSeries> assemble_design(
    const DeltaTable& deltas, const ParameterCouple& couple,
    const std::vector<std::string>& session_order,
    const std::map<std::string, std::map<std::string, double>>& scores, double chance) {
  if (session_order.size() < 2) {
    throw ValidationError("assemble_design: needs >= 2 sessions (training + target)");
  }
  const int s_train = static_cast<int>(session_order.size()) - 1;
  const std::string& target_session = session_order.back();

  // (subject, session) -> delta row for the requested couple
  std::map<std::pair<std::string, std::string>, const DeltaRow*> lookup;
  for (const auto& row : deltas.rows) {
    if (row.couple == couple) lookup[{row.subject, row.session}] = &row;
  }

  std::vector<SubjectSeries> series;
  for (const auto& [subject, per_session] : scores) {
    SubjectSeries s;
    s.subject = subject;
    s.x.resize(s_train, 2);
    for (int t = 0; t < s_train; ++t) {
      auto it = lookup.find({subject, session_order[static_cast<std::size_t>(t)]});
      if (it == lookup.end()) {
        throw ValidationError("assemble_design: missing delta features for (" + subject +
                              ", session " + session_order[static_cast<std::size_t>(t)] + ", " +
                              couple.tag() + ")");
      }
      s.x(t, 0) = it->second->delta_length;
      s.x(t, 1) = it->second->delta_activations;
    }
    auto yit = per_session.find(target_session);
    if (yit == per_session.end()) {
      throw ValidationError("assemble_design: missing target-session score for " + subject);
    }
    s.y = yit->second;
    s.label = s.y > chance;
    series.push_back(std::move(s));
  }
  if (series.empty()) throw ValidationError("assemble_design: no subjects with scores");
  return series;
}

Eigen::MatrixXd gram(const std::vector<Eigen::MatrixXd>& x, const Eigen::VectorXd& beta) {
  if (x.empty()) throw ValidationError("gram: no subjects");
  const auto rows = x.front().rows();
  const auto cols = x.front().cols();
  const int n = static_cast<int>(x.size());
  Eigen::MatrixXd z(n, cols);
  for (int i = 0; i < n; ++i) {
    const auto& xi = x[static_cast<std::size_t>(i)];
    if (xi.rows() != rows || xi.cols() != cols) throw ValidationError("gram: shape mismatch");
    if (beta.size() != rows) throw ValidationError("gram: beta length mismatch");
    z.row(i) = (xi.transpose() * beta).transpose();
  }
  return z * z.transpose();
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "lsvr") return ModelKind::Lsvr;
  if (s == "lsvc") return ModelKind::Lsvc;
  if (s == "svr") return ModelKind::Svr;
  if (s == "svc") return ModelKind::Svc;
  throw ValidationError("unknown model kind '" + s + "' (expected lsvr, lsvc, svr or svc)");
}

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Lsvr: return "lsvr";
    case ModelKind::Lsvc: return "lsvc";
    case ModelKind::Svr: return "svr";
    default: return "svc";
  }
}

namespace {

// Regularized linear beta step: with duals fixed, minimize
//   lambda * ||beta - beta_prev||^2 + sum_{i in SV} (r_i - beta . v_i)^2
// over beta with beta[0] pinned to 1, where v_i = X_i w and
// w = sum_i theta_i X_i' beta_prev.
struct BetaStep {
  Eigen::VectorXd beta;
  double objective_before = 0.0;
  double objective_after = 0.0;
  bool updated = false;
};

BetaStep beta_update(const std::vector<Eigen::MatrixXd>& xs, const Eigen::VectorXd& theta,
                     const Eigen::VectorXd& residual_targets, const Eigen::VectorXd& beta_prev,
                     double lambda) {
  const int s = static_cast<int>(beta_prev.size());
  const int f = static_cast<int>(xs.front().cols());
  BetaStep step;
  step.beta = beta_prev;

  Eigen::VectorXd w = Eigen::VectorXd::Zero(f);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (std::fabs(theta[static_cast<int>(i)]) > kSvEps) {
      w += theta[static_cast<int>(i)] * (xs[i].transpose() * beta_prev);
    }
  }

  std::vector<int> sv;
  for (int i = 0; i < theta.size(); ++i) {
    if (std::fabs(theta[i]) > kSvEps) sv.push_back(i);
  }
  if (sv.empty() || s < 2) return step;  // nothing to update against

  auto objective = [&](const Eigen::VectorXd& beta) {
    double obj = lambda * (beta - beta_prev).squaredNorm();
    for (int i : sv) {
      const Eigen::VectorXd v = xs[static_cast<std::size_t>(i)] * w;
      const double r = residual_targets[i] - beta.dot(v);
      obj += r * r;
    }
    return obj;
  };

  Eigen::MatrixXd lhs = lambda * Eigen::MatrixXd::Identity(s - 1, s - 1);
  Eigen::VectorXd rhs = lambda * beta_prev.tail(s - 1);
  for (int i : sv) {
    const Eigen::VectorXd v = xs[static_cast<std::size_t>(i)] * w;
    const Eigen::VectorXd vt = v.tail(s - 1);
    lhs += vt * vt.transpose();
    rhs += vt * (residual_targets[i] - v[0]);
  }
  Eigen::VectorXd free = lhs.ldlt().solve(rhs);
  if (!free.allFinite()) return step;  // reject the update, keep beta_prev

  Eigen::VectorXd beta_new(s);
  beta_new[0] = 1.0;
  beta_new.tail(s - 1) = free;

  step.objective_before = objective(beta_prev);
  step.objective_after = objective(beta_new);
  step.beta = beta_new;
  step.updated = true;
  return step;
}

LongitudinalModel fit_longitudinal(const std::vector<SubjectSeries>& series,
                                   const LongitudinalHyper& hyper, ModelKind kind) {
  validate_series(series);
  const bool classify = kind == ModelKind::Lsvc;
  if (!classify && series.size() < 3) throw ValidationError("lsvr_fit: needs >= 3 subjects");
  if (series.size() < 2) throw ValidationError("longitudinal fit: needs >= 2 subjects");
  const int s_train = static_cast<int>(series.front().x.rows());

  LongitudinalModel model;
  model.kind = kind;
  model.hyper = hyper;
  model.scaler = fit_standardizer(series);
  for (const auto& subj : series) model.train_x.push_back(standardize_x(model.scaler, subj.x));

  Eigen::VectorXd targets(static_cast<int>(series.size()));
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (classify) {
      targets[static_cast<int>(i)] = series[i].label ? 1.0 : -1.0;
    } else {
      targets[static_cast<int>(i)] = (series[i].y - model.scaler.y_mean) / model.scaler.y_sd;
    }
  }
  if (classify) {
    const bool pos = (targets.array() > 0).any();
    const bool neg = (targets.array() < 0).any();
    if (!pos || !neg) {
      throw ValidationError(
          "lsvc_fit: every subject falls on one side of the chance threshold; review the "
          "threshold before classifying");
    }
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Ones(s_train);
  if (hyper.fix_beta) {
    if (hyper.fix_beta->size() != s_train) throw ValidationError("fix_beta: length mismatch");
    if ((*hyper.fix_beta)[0] != 1.0) throw ValidationError("fix_beta: first component must be 1");
    beta = *hyper.fix_beta;
  }
  model.beta_trajectory.push_back(beta);

  auto solve_duals = [&](const Eigen::VectorXd& b_vec) {
    const Eigen::MatrixXd g = gram(model.train_x, b_vec);
    if (classify) {
      const KernelSvcResult res = svc_dual(g, targets, hyper.c);
      model.dual = res.coef;
      model.b = res.b;
    } else {
      const KernelSvrResult res = svr_dual(g, targets, hyper.c, hyper.epsilon);
      model.dual = res.theta;
      model.b = res.b;
    }
  };

  const bool beta_fixed = hyper.fix_beta.has_value() || s_train < 2;
  if (beta_fixed) {
    solve_duals(beta);
    model.beta = beta;
    model.converged = true;
    model.iterations = 1;
  } else {
    for (int outer = 0; outer < hyper.max_outer; ++outer) {
      solve_duals(beta);
      Eigen::VectorXd residual_targets = targets;
      if (!classify) residual_targets.array() -= model.b;
      const BetaStep step = beta_update(model.train_x, model.dual, residual_targets, beta, hyper.lambda);
      model.iterations = outer + 1;
      if (!step.updated) {
        model.converged = true;
        break;
      }
      model.beta_step_objectives.emplace_back(step.objective_before, step.objective_after);
      const double rel = (step.beta - beta).norm() / std::max(1.0, beta.norm());
      beta = step.beta;
      model.beta_trajectory.push_back(beta);
      if (rel < hyper.tol) {
        model.converged = true;
        break;
      }
    }
    // final duals consistent with the returned beta
    solve_duals(beta);
    model.beta = beta;
  }

  for (int i = 0; i < model.dual.size(); ++i) {
    if (std::fabs(model.dual[i]) > kSvEps) model.support.push_back(i);
  }
  return model;
}

}  // namespace

LongitudinalModel lsvr_fit(const std::vector<SubjectSeries>& series,
                           const LongitudinalHyper& hyper) {
  return fit_longitudinal(series, hyper, ModelKind::Lsvr);
}

LongitudinalModel lsvc_fit(const std::vector<SubjectSeries>& series,
                           const LongitudinalHyper& hyper) {
  return fit_longitudinal(series, hyper, ModelKind::Lsvc);
}

namespace {

double longitudinal_decision(const LongitudinalModel& model, const Eigen::MatrixXd& x_new) {
  if (x_new.rows() != model.beta.size() || x_new.cols() != model.scaler.mean.size()) {
    throw ValidationError("longitudinal predict: shape mismatch");
  }
  const Eigen::MatrixXd xs = standardize_x(model.scaler, x_new);
  const Eigen::VectorXd z_new = xs.transpose() * model.beta;
  double f = model.b;
  for (std::size_t i = 0; i < model.train_x.size(); ++i) {
    const double theta = model.dual[static_cast<int>(i)];
    if (std::fabs(theta) > kSvEps) {
      f += theta * (model.train_x[i].transpose() * model.beta).dot(z_new);
    }
  }
  return f;
}

}  // namespace

double lsvr_predict(const LongitudinalModel& model, const Eigen::MatrixXd& x_new) {
  if (model.kind != ModelKind::Lsvr) throw ValidationError("lsvr_predict: model is not a regressor");
  const double std_pred = longitudinal_decision(model, x_new);
  const double percent = model.scaler.y_mean + std_pred * model.scaler.y_sd;
  return std::clamp(percent, 0.0, 100.0);
}

double lsvc_decision(const LongitudinalModel& model, const Eigen::MatrixXd& x_new) {
  if (model.kind != ModelKind::Lsvc) throw ValidationError("lsvc_decision: model is not a classifier");
  return longitudinal_decision(model, x_new);
}

bool lsvc_predict(const LongitudinalModel& model, const Eigen::MatrixXd& x_new) {
  return lsvc_decision(model, x_new) >= 0.0;
}

namespace {

Eigen::MatrixXd session_mean_rows(const std::vector<SubjectSeries>& series,
                                  const Standardizer& scaler) {
  const int f = static_cast<int>(series.front().x.cols());
  Eigen::MatrixXd rows(static_cast<int>(series.size()), f);
  for (std::size_t i = 0; i < series.size(); ++i) {
    rows.row(static_cast<int>(i)) = standardize_x(scaler, series[i].x).colwise().mean();
  }
  return rows;
}

}  // namespace

BaselineModel baseline_svr_fit(const std::vector<SubjectSeries>& series, double c, double epsilon) {
  validate_series(series);
  BaselineModel model;
  model.kind = ModelKind::Svr;
  model.scaler = fit_standardizer(series);
  model.c = c;
  model.epsilon = epsilon;
  const Eigen::MatrixXd x = session_mean_rows(series, model.scaler);
  Eigen::VectorXd y(static_cast<int>(series.size()));
  for (std::size_t i = 0; i < series.size(); ++i) {
    y[static_cast<int>(i)] = (series[i].y - model.scaler.y_mean) / model.scaler.y_sd;
  }
  model.svr = svr_fit(x, y, c, epsilon);
  return model;
}

BaselineModel baseline_svc_fit(const std::vector<SubjectSeries>& series, double c) {
  validate_series(series);
  BaselineModel model;
  model.kind = ModelKind::Svc;
  model.scaler = fit_standardizer(series);
  model.c = c;
  const Eigen::MatrixXd x = session_mean_rows(series, model.scaler);
  Eigen::VectorXd labels(static_cast<int>(series.size()));
  for (std::size_t i = 0; i < series.size(); ++i) {
    labels[static_cast<int>(i)] = series[i].label ? 1.0 : -1.0;
  }
  model.svc = svc_fit(x, labels, c);
  return model;
}

double baseline_svr_predict(const BaselineModel& model, const Eigen::MatrixXd& x_new) {
  const Eigen::VectorXd mean_row = standardize_x(model.scaler, x_new).colwise().mean();
  const double std_pred = svr_predict(model.svr, mean_row);
  return std::clamp(model.scaler.y_mean + std_pred * model.scaler.y_sd, 0.0, 100.0);
}

bool baseline_svc_predict(const BaselineModel& model, const Eigen::MatrixXd& x_new) {
  const Eigen::VectorXd mean_row = standardize_x(model.scaler, x_new).colwise().mean();
  return svc_predict(model.svc, mean_row) > 0;
}

std::vector<SubjectSeries> shuffle_sessions_control(const std::vector<SubjectSeries>& series,
                                                    std::uint64_t seed) {
  std::vector<SubjectSeries> out = series;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int s = static_cast<int>(out[i].x.rows());
    if (s < 2) continue;
    std::vector<int> perm(static_cast<std::size_t>(s));
    std::iota(perm.begin(), perm.end(), 0);
    auto rng = make_rng(derive_seed(seed, i));
    fisher_yates(perm, rng);
    Eigen::MatrixXd shuffled(s, out[i].x.cols());
    for (int r = 0; r < s; ++r) shuffled.row(r) = series[i].x.row(perm[static_cast<std::size_t>(r)]);
    out[i].x = std::move(shuffled);
  }
  return out;
}

namespace {

struct GridPoint {
  double c = 1.0;
  double epsilon = 0.0;
  double lambda = 1.0;
};

std::vector<GridPoint> expand_grid(const HyperGrid& grid, ModelKind kind) {
  const bool regression = kind == ModelKind::Lsvr || kind == ModelKind::Svr;
  const bool longitudinal = kind == ModelKind::Lsvr || kind == ModelKind::Lsvc;
  std::vector<double> cs = grid.c;
  std::vector<double> eps = regression ? grid.epsilon : std::vector<double>{0.0};
  std::vector<double> lambdas = longitudinal ? grid.lambda : std::vector<double>{0.0};
  std::sort(cs.begin(), cs.end());
  std::sort(eps.begin(), eps.end());
  std::sort(lambdas.begin(), lambdas.end());
  // Tie-break order: smaller C, then smaller lambda, then smaller epsilon.
  std::vector<GridPoint> points;
  for (double c : cs) {
    for (double l : lambdas) {
      for (double e : eps) points.push_back({c, e, l});
    }
  }
  return points;
}

struct FittedAny {
  std::optional<LongitudinalModel> longitudinal;
  std::optional<BaselineModel> baseline;
};

FittedAny fit_kind(const std::vector<SubjectSeries>& train, ModelKind kind, const GridPoint& gp) {
  FittedAny fitted;
  switch (kind) {
    case ModelKind::Lsvr: {
      LongitudinalHyper h;
      h.c = gp.c;
      h.epsilon = gp.epsilon;
      h.lambda = gp.lambda;
      fitted.longitudinal = lsvr_fit(train, h);
      break;
    }
    case ModelKind::Lsvc: {
      LongitudinalHyper h;
      h.c = gp.c;
      h.lambda = gp.lambda;
      fitted.longitudinal = lsvc_fit(train, h);
      break;
    }
    case ModelKind::Svr:
      fitted.baseline = baseline_svr_fit(train, gp.c, gp.epsilon);
      break;
    case ModelKind::Svc:
      fitted.baseline = baseline_svc_fit(train, gp.c);
      break;
  }
  return fitted;
}

double predict_score(const FittedAny& fitted, ModelKind kind, const Eigen::MatrixXd& x) {
  if (kind == ModelKind::Lsvr) return lsvr_predict(*fitted.longitudinal, x);
  return baseline_svr_predict(*fitted.baseline, x);
}

bool predict_label(const FittedAny& fitted, ModelKind kind, const Eigen::MatrixXd& x) {
  if (kind == ModelKind::Lsvc) return lsvc_predict(*fitted.longitudinal, x);
  return baseline_svc_predict(*fitted.baseline, x);
}

}  // namespace

LooReport loo_evaluate(const std::vector<SubjectSeries>& series, ModelKind kind,
                       const HyperGrid& grid) {
  validate_series(series);
  if (series.size() < 3) throw ValidationError("loo_evaluate: needs >= 3 subjects");
  const bool regression = kind == ModelKind::Lsvr || kind == ModelKind::Svr;
  const std::vector<GridPoint> points = expand_grid(grid, kind);

  LooReport report;
  report.kind = kind;

  for (std::size_t held = 0; held < series.size(); ++held) {
    std::vector<SubjectSeries> train;
    train.reserve(series.size() - 1);
    for (std::size_t i = 0; i < series.size(); ++i) {
      if (i != held) train.push_back(series[i]);
    }

    FoldResult fold;
    fold.subject = series[held].subject;
    fold.actual = series[held].y;
    fold.actual_label = series[held].label;

    // Inner leave-one-out over the training subjects scores each grid point;
    // the held-out subject is invisible to this entire block.
    const GridPoint* best = nullptr;
    double best_score = 0.0;
    for (const GridPoint& gp : points) {
      double sq_err = 0.0;
      int correct = 0, evaluated = 0;
      for (std::size_t inner = 0; inner < train.size(); ++inner) {
        std::vector<SubjectSeries> inner_train;
        inner_train.reserve(train.size() - 1);
        for (std::size_t i = 0; i < train.size(); ++i) {
          if (i != inner) inner_train.push_back(train[i]);
        }
        try {
          const FittedAny fitted = fit_kind(inner_train, kind, gp);
          if (regression) {
            const double pred = predict_score(fitted, kind, train[inner].x);
            sq_err += (pred - train[inner].y) * (pred - train[inner].y);
          } else {
            correct += predict_label(fitted, kind, train[inner].x) == train[inner].label ? 1 : 0;
          }
          ++evaluated;
        } catch (const Error&) {
          if (regression) {
            sq_err += 1e6;  // failed inner fit: heavily penalized
            ++evaluated;
          } else {
            ++evaluated;  // counted as incorrect
          }
        }
      }
      if (evaluated == 0) continue;
      const double score = regression ? -std::sqrt(sq_err / evaluated)
                                      : static_cast<double>(correct) / evaluated;
      if (!best || score > best_score) {
        best = &gp;
        best_score = score;
      }
    }

    if (!best) {
      fold.failed = true;
      fold.error = "no usable hyperparameter point";
      report.folds.push_back(std::move(fold));
      ++report.n_failed;
      continue;
    }

    try {
      const FittedAny fitted = fit_kind(train, kind, *best);
      fold.hyper.c = best->c;
      fold.hyper.epsilon = best->epsilon;
      fold.hyper.lambda = best->lambda;
      if (fitted.longitudinal) fold.beta = fitted.longitudinal->beta;
      if (regression) {
        fold.predicted = predict_score(fitted, kind, series[held].x);
      } else {
        fold.predicted_label = predict_label(fitted, kind, series[held].x);
        fold.predicted = fitted.longitudinal ? lsvc_decision(*fitted.longitudinal, series[held].x)
                                             : (fold.predicted_label ? 1.0 : -1.0);
      }
    } catch (const Error& e) {
      fold.failed = true;
      fold.error = e.what();
      ++report.n_failed;
    }
    report.folds.push_back(std::move(fold));
  }

  double sq = 0.0;
  int n_ok = 0, n_correct = 0;
  for (const auto& fold : report.folds) {
    if (fold.failed) continue;
    ++n_ok;
    if (regression) {
      sq += (fold.predicted - fold.actual) * (fold.predicted - fold.actual);
    } else {
      n_correct += fold.predicted_label == fold.actual_label ? 1 : 0;
      ++report.confusion[fold.actual_label ? 1 : 0][fold.predicted_label ? 1 : 0];
    }
  }
  if (n_ok > 0) {
    report.rmse = regression ? std::sqrt(sq / n_ok) : 0.0;
    report.accuracy = regression ? 0.0 : static_cast<double>(n_correct) / n_ok;
  }
  return report;
}

}  // namespace avbci
