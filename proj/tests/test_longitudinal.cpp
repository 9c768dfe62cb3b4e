#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "avbci/longitudinal.hpp"
#include "avbci/rng.hpp"

using namespace avbci;

namespace {

double gauss(std::mt19937_64& rng) {
  double u1 = uniform_real(rng);
  while (u1 <= 0.0) u1 = uniform_real(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * uniform_real(rng));
}

std::vector<SubjectSeries> random_series(int n_subjects, int s_train, int f, std::uint64_t seed,
                                         double chance = 57.0) {
  auto rng = make_rng(seed);
  std::vector<SubjectSeries> series;
  for (int i = 0; i < n_subjects; ++i) {
    SubjectSeries s;
    s.subject = "S" + std::to_string(i);
    s.x.resize(s_train, f);
    for (int r = 0; r < s_train; ++r) {
      for (int c = 0; c < f; ++c) s.x(r, c) = gauss(rng);
    }
    s.y = 50.0 + 12.0 * gauss(rng);
    s.y = std::clamp(s.y, 0.0, 100.0);
    s.label = s.y > chance;
    series.push_back(std::move(s));
  }
  return series;
}

}  // namespace

TEST_CASE("standardizer: zero-mean unit-sd columns and strict label threshold") {
  const auto series = random_series(12, 3, 2, 42);
  const Standardizer scaler = fit_standardizer(series);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(2), sumsq = Eigen::VectorXd::Zero(2);
  long n = 0;
  for (const auto& s : series) {
    const Eigen::MatrixXd z = standardize_x(scaler, s.x);
    sum += z.colwise().sum().transpose();
    n += z.rows();
    sumsq += z.array().square().colwise().sum().matrix().transpose();
  }
  for (int c = 0; c < 2; ++c) {
    const double mean = sum[c] / static_cast<double>(n);
    const double var = (sumsq[c] - n * mean * mean) / static_cast<double>(n - 1);
    CHECK(std::fabs(mean) < 1e-9);
    CHECK(std::fabs(var - 1.0) < 1e-9);
  }

  // assemble_design: y exactly at chance is a negative label
  DeltaTable deltas;
  for (const std::string session : {"1", "2"}) {
    DeltaRow row;
    row.subject = "S01";
    row.session = session;
    row.couple = ParameterCouple{3, 12, 50.0, false};
    row.delta_length = 1.0;
    row.delta_activations = 2.0;
    deltas.rows.push_back(row);
  }
  std::map<std::string, std::map<std::string, double>> scores{{"S01", {{"1", 50.0}, {"2", 57.0}}}};
  const auto design = assemble_design(deltas, ParameterCouple{3, 12, 50.0, false}, {"1", "2"},
                                      scores, 57.0);
  REQUIRE(design.size() == 1);
  CHECK(design[0].x.rows() == 1);
  CHECK(design[0].x.cols() == 2);
  CHECK(design[0].y == 57.0);
  CHECK_FALSE(design[0].label);  // strict inequality

  scores["S01"].erase("2");
  CHECK_THROWS_AS(assemble_design(deltas, ParameterCouple{3, 12, 50.0, false}, {"1", "2"}, scores,
                                  57.0),
                  ValidationError);
}

TEST_CASE("gram matrix: projection case, zero subject, definition oracle, PSD") {
  auto rng = make_rng(3);
  const int n = 6, s = 3, f = 2;
  std::vector<Eigen::MatrixXd> xs;
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd x(s, f);
    for (int r = 0; r < s; ++r) {
      for (int c = 0; c < f; ++c) x(r, c) = gauss(rng);
    }
    xs.push_back(std::move(x));
  }
  xs[2].setZero();

  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(s);
  e1[0] = 1.0;
  const Eigen::MatrixXd g1 = gram(xs, e1);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      CHECK(g1(i, j) == doctest::Approx(xs[static_cast<std::size_t>(i)].row(0).dot(
                            xs[static_cast<std::size_t>(j)].row(0))).epsilon(1e-12));
    }
  }

  Eigen::VectorXd beta(s);
  beta << 1.0, -0.4, 2.2;
  const Eigen::MatrixXd g = gram(xs, beta);
  CHECK(g.row(2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.col(2).cwiseAbs().maxCoeff() == 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Eigen::VectorXd zi = xs[static_cast<std::size_t>(i)].transpose() * beta;
      const Eigen::VectorXd zj = xs[static_cast<std::size_t>(j)].transpose() * beta;
      CHECK(g(i, j) == doctest::Approx(zi.dot(zj)).epsilon(1e-12));
    }
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
  CHECK(eig.eigenvalues().minCoeff() > -1e-9);
}

TEST_CASE("S_train = 1 reduces LSVR/LSVC to the standard baselines exactly") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
    const auto series = random_series(9, 1, 2, seed);
    LongitudinalHyper hyper;
    hyper.c = 10.0;
    hyper.epsilon = 0.2;
    const LongitudinalModel lsvr = lsvr_fit(series, hyper);
    const BaselineModel svr = baseline_svr_fit(series, hyper.c, hyper.epsilon);
    REQUIRE(lsvr.beta.size() == 1);
    CHECK(lsvr.beta[0] == 1.0);

    bool both_classes = false;
    {
      int pos = 0;
      for (const auto& s : series) pos += s.label ? 1 : 0;
      both_classes = pos > 0 && pos < static_cast<int>(series.size());
    }
    LongitudinalModel lsvc;
    BaselineModel svc;
    if (both_classes) {
      LongitudinalHyper ch;
      ch.c = 5.0;
      lsvc = lsvc_fit(series, ch);
      svc = baseline_svc_fit(series, ch.c);
    }

    auto probe_rng = make_rng(seed + 100);
    for (int probe = 0; probe < 12; ++probe) {
      Eigen::MatrixXd x(1, 2);
      x << gauss(probe_rng), gauss(probe_rng);
      CHECK(lsvr_predict(lsvr, x) == doctest::Approx(baseline_svr_predict(svr, x)).epsilon(1e-8));
      if (both_classes) CHECK(lsvc_predict(lsvc, x) == baseline_svc_predict(svc, x));
    }
  }
}

TEST_CASE("pinned beta = e1 equals a standard SVR on the first-session projection") {
  for (std::uint64_t seed : {11ULL, 12ULL, 13ULL}) {
    const auto series = random_series(8, 3, 2, seed);
    LongitudinalHyper hyper;
    hyper.c = 10.0;
    hyper.epsilon = 0.2;
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(3);
    e1[0] = 1.0;
    hyper.fix_beta = e1;
    const LongitudinalModel pinned = lsvr_fit(series, hyper);

    // reference: plain SVR on the identically standardized first rows
    Eigen::MatrixXd first_rows(static_cast<int>(series.size()), 2);
    Eigen::VectorXd y_std(static_cast<int>(series.size()));
    for (std::size_t i = 0; i < series.size(); ++i) {
      first_rows.row(static_cast<int>(i)) = standardize_x(pinned.scaler, series[i].x).row(0);
      y_std[static_cast<int>(i)] = (series[i].y - pinned.scaler.y_mean) / pinned.scaler.y_sd;
    }
    const SvrModel reference = svr_fit(first_rows, y_std, hyper.c, hyper.epsilon);

    auto probe_rng = make_rng(seed + 55);
    for (int probe = 0; probe < 8; ++probe) {
      Eigen::MatrixXd x(3, 2);
      for (int r = 0; r < 3; ++r) {
        x(r, 0) = gauss(probe_rng);
        x(r, 1) = gauss(probe_rng);
      }
      const double got = lsvr_predict(pinned, x);
      const double std_pred =
          svr_predict(reference, standardize_x(pinned.scaler, x).row(0).transpose());
      const double want =
          std::clamp(pinned.scaler.y_mean + std_pred * pinned.scaler.y_sd, 0.0, 100.0);
      CHECK(got == doctest::Approx(want).epsilon(1e-8));
    }
  }
}

TEST_CASE("beta update favors the predictive session") {
  int hits = 0;
  const int runs = 20;
  for (int run = 0; run < runs; ++run) {
    auto rng = make_rng(700 + static_cast<std::uint64_t>(run));
    std::vector<SubjectSeries> series;
    for (int i = 0; i < 14; ++i) {
      SubjectSeries s;
      s.subject = "S" + std::to_string(i);
      s.x.resize(3, 2);
      for (int r = 0; r < 3; ++r) {
        s.x(r, 0) = gauss(rng);
        s.x(r, 1) = gauss(rng);
      }
      // target depends only on session 3
      s.y = std::clamp(50.0 + 18.0 * (s.x(2, 0) + s.x(2, 1)) + 0.2 * gauss(rng), 0.0, 100.0);
      s.label = s.y > 57.0;
      series.push_back(std::move(s));
    }
    LongitudinalHyper hyper;
    hyper.c = 100.0;
    hyper.epsilon = 0.1;
    hyper.lambda = 0.1;
    const LongitudinalModel model = lsvr_fit(series, hyper);
    const Eigen::VectorXd beta_abs = model.beta.cwiseAbs();
    int argmax = 0;
    beta_abs.maxCoeff(&argmax);
    if (argmax == 2) ++hits;
  }
  CHECK(hits >= 18);  // >= 90% of seeded runs
}

TEST_CASE("alternating fits never increase the beta-step objective") {
  const auto series = random_series(10, 4, 2, 21);
  LongitudinalHyper hyper;
  hyper.c = 10.0;
  hyper.epsilon = 0.1;
  hyper.lambda = 1.0;
  const LongitudinalModel model = lsvr_fit(series, hyper);
  CHECK(!model.beta_step_objectives.empty());
  for (const auto& [before, after] : model.beta_step_objectives) {
    CHECK(after <= before + 1e-9 * (1.0 + std::fabs(before)));
  }
  CHECK(model.beta_trajectory.size() == static_cast<std::size_t>(model.iterations) + 1);
  CHECK(model.beta[0] == 1.0);
}

TEST_CASE("subject order does not change the fit") {
  const auto series = random_series(9, 3, 2, 33);
  LongitudinalHyper hyper;
  hyper.c = 10.0;
  hyper.epsilon = 0.2;
  const LongitudinalModel base = lsvr_fit(series, hyper);

  std::vector<SubjectSeries> reversed(series.rbegin(), series.rend());
  const LongitudinalModel perm = lsvr_fit(reversed, hyper);
  CHECK((base.beta - perm.beta).cwiseAbs().maxCoeff() < 1e-6);
  auto rng = make_rng(99);
  for (int probe = 0; probe < 10; ++probe) {
    Eigen::MatrixXd x(3, 2);
    for (int r = 0; r < 3; ++r) {
      x(r, 0) = gauss(rng);
      x(r, 1) = gauss(rng);
    }
    CHECK(lsvr_predict(base, x) == doctest::Approx(lsvr_predict(perm, x)).epsilon(1e-6));
  }
}

TEST_CASE("lsvc: duplicated identical rows with all-ones beta scale like the plain svc") {
  auto rng = make_rng(14);
  const int n = 8, s = 3, f = 2;
  std::vector<SubjectSeries> series;
  Eigen::MatrixXd rows(n, f);
  for (int i = 0; i < n; ++i) {
    SubjectSeries subj;
    subj.subject = "S" + std::to_string(i);
    Eigen::RowVectorXd row(f);
    row << gauss(rng), gauss(rng);
    rows.row(i) = row;
    subj.x = row.replicate(s, 1);
    subj.y = i % 2 == 0 ? 70.0 : 40.0;
    subj.label = subj.y > 57.0;
    series.push_back(std::move(subj));
  }
  LongitudinalHyper hyper;
  hyper.c = 2.0;
  hyper.fix_beta = Eigen::VectorXd::Ones(s);
  const LongitudinalModel lsvc = lsvc_fit(series, hyper);

  // plain svc on the standardized common rows scaled by S
  const Standardizer scaler = fit_standardizer(series);
  Eigen::MatrixXd scaled(n, f);
  Eigen::VectorXd labels(n);
  for (int i = 0; i < n; ++i) {
    scaled.row(i) = static_cast<double>(s) *
                    standardize_x(scaler, series[static_cast<std::size_t>(i)].x).row(0);
    labels[i] = series[static_cast<std::size_t>(i)].label ? 1.0 : -1.0;
  }
  const SvcModel plain = svc_fit(scaled, labels, hyper.c);
  for (int i = 0; i < n; ++i) {
    const double a = lsvc_decision(lsvc, series[static_cast<std::size_t>(i)].x);
    const double b = svc_decision(plain, scaled.row(i).transpose());
    CHECK(a == doctest::Approx(b).epsilon(1e-6));
  }
}

TEST_CASE("lsvc rejects single-class inputs with advice") {
  auto series = random_series(6, 2, 2, 5);
  for (auto& s : series) {
    s.y = 90.0;
    s.label = true;
  }
  CHECK_THROWS_WITH_AS(lsvc_fit(series, LongitudinalHyper{}), doctest::Contains("threshold"),
                       ValidationError);
}

TEST_CASE("shuffle control: identity for one session, deterministic, permutes rows") {
  const auto single = random_series(5, 1, 2, 61);
  const auto unchanged = shuffle_sessions_control(single, 9);
  for (std::size_t i = 0; i < single.size(); ++i) {
    CHECK(single[i].x == unchanged[i].x);
  }

  const auto series = random_series(6, 4, 2, 62);
  const auto a = shuffle_sessions_control(series, 1234);
  const auto b = shuffle_sessions_control(series, 1234);
  const auto c = shuffle_sessions_control(series, 4321);
  bool same_ab = true, diff_ac = false;
  for (std::size_t i = 0; i < series.size(); ++i) {
    same_ab = same_ab && a[i].x == b[i].x;
    diff_ac = diff_ac || a[i].x != c[i].x;
    CHECK(a[i].y == series[i].y);
    // rows are a permutation: sorted column sums match
    Eigen::VectorXd sa = a[i].x.rowwise().sum(), ss = series[i].x.rowwise().sum();
    std::sort(sa.data(), sa.data() + sa.size());
    std::sort(ss.data(), ss.data() + ss.size());
    CHECK((sa - ss).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK(same_ab);
  CHECK(diff_ac);
}

TEST_CASE("loo: fold count, leak-free training, noiseless regression accuracy") {
  // exactly 3 folds at n = 3
  {
    auto series = random_series(3, 2, 2, 71);
    series[0].y = 70;
    series[0].label = true;
    series[1].y = 40;
    series[1].label = false;
    series[2].y = 65;
    series[2].label = true;
    const LooReport report = loo_evaluate(series, ModelKind::Lsvr);
    CHECK(report.folds.size() == 3);
  }

  // poisoning the held-out subject must not change that fold's model
  {
    const auto series = random_series(6, 3, 2, 72);
    const LooReport clean = loo_evaluate(series, ModelKind::Lsvr);
    auto poisoned = series;
    poisoned[2].x.setConstant(1e3);
    poisoned[2].y = 3.0;
    const LooReport dirty = loo_evaluate(poisoned, ModelKind::Lsvr);
    REQUIRE(!clean.folds[2].failed);
    REQUIRE(!dirty.folds[2].failed);
    CHECK(clean.folds[2].hyper.c == dirty.folds[2].hyper.c);
    CHECK(clean.folds[2].hyper.epsilon == dirty.folds[2].hyper.epsilon);
    CHECK(clean.folds[2].hyper.lambda == dirty.folds[2].hyper.lambda);
    CHECK((clean.folds[2].beta - dirty.folds[2].beta).cwiseAbs().maxCoeff() == 0.0);
  }

  // noiseless linear target inside the model class (y = w . X'beta* with
  // beta* = (1, 2)): LSVR recovers it to under a percentage point
  {
    auto rng = make_rng(73);
    std::vector<SubjectSeries> series;
    for (int i = 0; i < 10; ++i) {
      SubjectSeries s;
      s.subject = "S" + std::to_string(i);
      s.x.resize(2, 2);
      for (int r = 0; r < 2; ++r) {
        s.x(r, 0) = gauss(rng);
        s.x(r, 1) = gauss(rng);
      }
      s.y = 55.0 + 2.2 * (s.x(0, 0) + 2.0 * s.x(1, 0));
      s.label = s.y > 57.0;
      series.push_back(std::move(s));
    }
    const LooReport report = loo_evaluate(series, ModelKind::Lsvr);
    CHECK(report.n_failed == 0);
    CHECK(report.rmse < 1.0);
  }
}

TEST_CASE("loo with random labels stays near chance") {
  int correct = 0, total = 0;
  for (int rep = 0; rep < 10; ++rep) {
    auto rng = make_rng(4000 + static_cast<std::uint64_t>(rep));
    auto series = random_series(8, 2, 2, 5000 + static_cast<std::uint64_t>(rep));
    for (auto& s : series) {
      s.label = (rng() & 1ULL) != 0;  // labels decoupled from features
      s.y = s.label ? 70.0 : 40.0;
    }
    int pos = 0;
    for (const auto& s : series) pos += s.label ? 1 : 0;
    if (pos == 0 || pos == static_cast<int>(series.size())) continue;
    const LooReport report = loo_evaluate(series, ModelKind::Lsvc);
    for (const auto& fold : report.folds) {
      if (!fold.failed) {
        correct += fold.predicted_label == fold.actual_label ? 1 : 0;
        ++total;
      }
    }
  }
  REQUIRE(total > 30);
  const double accuracy = static_cast<double>(correct) / total;
  CHECK(accuracy > 0.25);
  CHECK(accuracy < 0.75);
}
