#include "avbci/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "avbci/rng.hpp"
#include "parallel.hpp"

namespace avbci {

namespace {

constexpr double kHugeF = 1e300;

// Midranks of |values| (ties share the average rank).
std::vector<double> midranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(const std::vector<double>& v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double quantile_type7(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ValidationError("wilcoxon: sequences differ in length");
  std::vector<double> diffs;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    if (d != 0.0) diffs.push_back(d);
  }
  if (diffs.empty()) throw ValidationError("wilcoxon: degenerate pairing (all differences zero)");
  const int n = static_cast<int>(diffs.size());
  if (n < 5) {
    throw ValidationError("wilcoxon: needs >= 5 nonzero differences, got " + std::to_string(n));
  }

  std::vector<double> abs_diffs(diffs.size());
  for (std::size_t i = 0; i < diffs.size(); ++i) abs_diffs[i] = std::fabs(diffs[i]);
  const std::vector<double> ranks = midranks(abs_diffs);

  double w_pos = 0.0, w_neg = 0.0;
  for (std::size_t i = 0; i < diffs.size(); ++i) {
    (diffs[i] > 0 ? w_pos : w_neg) += ranks[i];
  }

  WilcoxonResult res;
  res.n = n;
  res.w = std::min(w_pos, w_neg);

  if (n <= 25) {
    // Exact sign-flip distribution of W+ conditional on the observed ranks.
    // Doubling makes the midranks integral; the count table enumerates all
    // 2^n sign patterns.
    res.exact = true;
    std::vector<long> r2(diffs.size());
    long total2 = 0;
    for (std::size_t i = 0; i < ranks.size(); ++i) {
      r2[i] = std::lround(2.0 * ranks[i]);
      total2 += r2[i];
    }
    std::vector<double> count(static_cast<std::size_t>(total2) + 1, 0.0);
    count[0] = 1.0;
    long reach = 0;
    for (long r : r2) {
      for (long s = reach; s >= 0; --s) {
        if (count[static_cast<std::size_t>(s)] > 0) {
          count[static_cast<std::size_t>(s + r)] += count[static_cast<std::size_t>(s)];
        }
      }
      reach += r;
    }
    const double denom = std::pow(2.0, n);
    const long w2 = std::lround(2.0 * res.w);
    double tail_low = 0.0, tail_high = 0.0;
    for (long s = 0; s <= total2; ++s) {
      if (s <= w2) tail_low += count[static_cast<std::size_t>(s)];
      if (s >= total2 - w2) tail_high += count[static_cast<std::size_t>(s)];
    }
    res.p = std::min(1.0, (tail_low + tail_high) / denom);
  } else {
    // Normal approximation with tie and continuity corrections.
    double tie_term = 0.0;
    std::vector<double> sorted = abs_diffs;
    std::sort(sorted.begin(), sorted.end());
    std::size_t i = 0;
    while (i < sorted.size()) {
      std::size_t j = i;
      while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      tie_term += t * t * t - t;
      i = j + 1;
    }
    const double nn = n;
    const double mu = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    if (!(var > 0)) throw NumericError("wilcoxon: zero variance under ties");
    const double z = (res.w - mu + 0.5) / std::sqrt(var);
    boost::math::normal_distribution<> nd;
    res.p = std::min(1.0, 2.0 * boost::math::cdf(nd, z));
  }
  return res;
}

FriedmanResult friedman(const std::vector<std::vector<double>>& matrix) {
  const std::size_t n = matrix.size();
  if (n < 2) throw ValidationError("friedman: needs >= 2 subjects");
  const std::size_t k = matrix.front().size();
  if (k < 2) throw ValidationError("friedman: needs >= 2 conditions");
  for (const auto& row : matrix) {
    if (row.size() != k) throw ValidationError("friedman: ragged matrix");
  }

  std::vector<double> col_rank_sum(k, 0.0);
  double tie_sum = 0.0;
  for (const auto& row : matrix) {
    const std::vector<double> ranks = midranks(row);
    for (std::size_t j = 0; j < k; ++j) col_rank_sum[j] += ranks[j];
    std::vector<double> sorted = row;
    std::sort(sorted.begin(), sorted.end());
    std::size_t i = 0;
    while (i < k) {
      std::size_t j = i;
      while (j + 1 < k && sorted[j + 1] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      tie_sum += t * t * t - t;
      i = j + 1;
    }
  }

  const double nn = static_cast<double>(n);
  const double kk = static_cast<double>(k);
  double ssbn = 0.0;
  for (double r : col_rank_sum) ssbn += r * r;
  const double correction = 1.0 - tie_sum / (nn * kk * (kk * kk - 1.0));

  FriedmanResult res;
  res.df = static_cast<int>(k) - 1;
  if (correction <= 0.0) {
    // every row fully tied: no information
    res.chi2 = 0.0;
    res.p = 1.0;
    return res;
  }
  res.chi2 = (12.0 / (nn * kk * (kk + 1.0)) * ssbn - 3.0 * nn * (kk + 1.0)) / correction;
  if (res.chi2 < 0 && res.chi2 > -1e-12) res.chi2 = 0.0;
  boost::math::chi_squared_distribution<> dist(res.df);
  res.p = boost::math::cdf(boost::math::complement(dist, res.chi2));
  return res;
}

PairedTResult paired_t(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ValidationError("paired_t: sequences differ in length");
  if (x.size() < 2) throw ValidationError("paired_t: needs >= 2 pairs");
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - y[i];
  const double sd = sample_sd(d);
  if (!(sd > 0)) throw NumericError("paired_t: zero variance of differences");
  PairedTResult res;
  res.df = static_cast<int>(x.size()) - 1;
  res.t = mean_of(d) / (sd / std::sqrt(static_cast<double>(d.size())));
  return res;
}

PermScheme perm_scheme_from_string(const std::string& s) {
  if (s == "free") return PermScheme::Free;
  if (s == "within-subject") return PermScheme::WithinSubject;
  throw ValidationError("unknown permutation scheme '" + s +
                        "' (expected free or within-subject)");
}

const char* to_string(PermScheme s) {
  return s == PermScheme::Free ? "free" : "within-subject";
}

namespace {

// F statistics of the two-within-factor repeated-measures decomposition on a
// flat array indexed [i*A*B + a*B + b]. Effects are tested against their
// interaction-with-subject error terms.
std::array<double, 3> rm_anova_f_flat(const std::vector<double>& y, int n, int A, int B) {
  const double N = static_cast<double>(n) * A * B;
  auto at = [&](int i, int a, int b) { return y[static_cast<std::size_t>((i * A + a) * B + b)]; };

  double grand = 0.0;
  for (double v : y) grand += v;
  grand /= N;

  std::vector<double> mi(static_cast<std::size_t>(n), 0.0), ma(static_cast<std::size_t>(A), 0.0),
      mb(static_cast<std::size_t>(B), 0.0);
  std::vector<double> mab(static_cast<std::size_t>(A * B), 0.0),
      mia(static_cast<std::size_t>(n * A), 0.0), mib(static_cast<std::size_t>(n * B), 0.0);
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < A; ++a) {
      for (int b = 0; b < B; ++b) {
        const double v = at(i, a, b);
        mi[static_cast<std::size_t>(i)] += v;
        ma[static_cast<std::size_t>(a)] += v;
        mb[static_cast<std::size_t>(b)] += v;
        mab[static_cast<std::size_t>(a * B + b)] += v;
        mia[static_cast<std::size_t>(i * A + a)] += v;
        mib[static_cast<std::size_t>(i * B + b)] += v;
      }
    }
  }
  for (auto& v : mi) v /= static_cast<double>(A * B);
  for (auto& v : ma) v /= static_cast<double>(n * B);
  for (auto& v : mb) v /= static_cast<double>(n * A);
  for (auto& v : mab) v /= static_cast<double>(n);
  for (auto& v : mia) v /= static_cast<double>(B);
  for (auto& v : mib) v /= static_cast<double>(A);

  double ss_a = 0.0, ss_b = 0.0, ss_ab = 0.0, ss_as = 0.0, ss_bs = 0.0, ss_abs = 0.0;
  for (int a = 0; a < A; ++a) {
    const double d = ma[static_cast<std::size_t>(a)] - grand;
    ss_a += d * d;
  }
  ss_a *= static_cast<double>(n * B);
  for (int b = 0; b < B; ++b) {
    const double d = mb[static_cast<std::size_t>(b)] - grand;
    ss_b += d * d;
  }
  ss_b *= static_cast<double>(n * A);
  for (int a = 0; a < A; ++a) {
    for (int b = 0; b < B; ++b) {
      const double d = mab[static_cast<std::size_t>(a * B + b)] - ma[static_cast<std::size_t>(a)] -
                       mb[static_cast<std::size_t>(b)] + grand;
      ss_ab += d * d;
    }
  }
  ss_ab *= static_cast<double>(n);
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < A; ++a) {
      const double d = mia[static_cast<std::size_t>(i * A + a)] - mi[static_cast<std::size_t>(i)] -
                       ma[static_cast<std::size_t>(a)] + grand;
      ss_as += d * d;
    }
  }
  ss_as *= static_cast<double>(B);
  for (int i = 0; i < n; ++i) {
    for (int b = 0; b < B; ++b) {
      const double d = mib[static_cast<std::size_t>(i * B + b)] - mi[static_cast<std::size_t>(i)] -
                       mb[static_cast<std::size_t>(b)] + grand;
      ss_bs += d * d;
    }
  }
  ss_bs *= static_cast<double>(A);
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < A; ++a) {
      for (int b = 0; b < B; ++b) {
        const double d = at(i, a, b) - mia[static_cast<std::size_t>(i * A + a)] -
                         mib[static_cast<std::size_t>(i * B + b)] -
                         mab[static_cast<std::size_t>(a * B + b)] +
                         mi[static_cast<std::size_t>(i)] + ma[static_cast<std::size_t>(a)] +
                         mb[static_cast<std::size_t>(b)] - grand;
        ss_abs += d * d;
      }
    }
  }

  auto f_ratio = [](double ss_eff, int df_eff, double ss_err, int df_err) {
    const double ms_eff = ss_eff / df_eff;
    const double ms_err = ss_err / df_err;
    if (!(ms_err > 1e-14 * (1.0 + ms_eff))) return ms_eff > 1e-300 ? kHugeF : 0.0;
    return ms_eff / ms_err;
  };
  return {f_ratio(ss_a, A - 1, ss_as, (A - 1) * (n - 1)),
          f_ratio(ss_b, B - 1, ss_bs, (B - 1) * (n - 1)),
          f_ratio(ss_ab, (A - 1) * (B - 1), ss_abs, (A - 1) * (B - 1) * (n - 1))};
}

void validate_cells(const std::vector<std::vector<std::vector<double>>>& cells, int& n, int& A,
                    int& B) {
  n = static_cast<int>(cells.size());
  if (n < 2) throw ValidationError("rm_anova: needs >= 2 subjects");
  A = static_cast<int>(cells.front().size());
  if (A < 2) throw ValidationError("rm_anova: factor A needs >= 2 levels");
  B = static_cast<int>(cells.front().front().size());
  if (B < 2) throw ValidationError("rm_anova: factor B needs >= 2 levels");
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(cells[static_cast<std::size_t>(i)].size()) != A) {
      throw ValidationError("rm_anova: missing cell at subject index " + std::to_string(i));
    }
    for (int a = 0; a < A; ++a) {
      if (static_cast<int>(cells[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)].size()) != B) {
        throw ValidationError("rm_anova: missing cell at subject index " + std::to_string(i) +
                              ", factor A level " + std::to_string(a));
      }
    }
  }
}

}  // namespace

std::array<double, 3> rm_anova_f(const std::vector<std::vector<std::vector<double>>>& cells) {
  int n, A, B;
  validate_cells(cells, n, A, B);
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(n * A * B));
  for (const auto& subj : cells) {
    for (const auto& row : subj) {
      for (double v : row) flat.push_back(v);
    }
  }
  return rm_anova_f_flat(flat, n, A, B);
}

std::vector<EffectReport> perm_rm_anova(const std::vector<std::vector<std::vector<double>>>& cells,
                                        int n_permutations, std::uint64_t seed,
                                        const std::string& name_a, const std::string& name_b,
                                        PermScheme scheme) {
  if (n_permutations < 1000) {
    throw ValidationError("perm_rm_anova: needs >= 1000 permutations");
  }
  int n, A, B;
  validate_cells(cells, n, A, B);
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(n * A * B));
  for (const auto& subj : cells) {
    for (const auto& row : subj) {
      for (double v : row) flat.push_back(v);
    }
  }
  const std::array<double, 3> observed = rm_anova_f_flat(flat, n, A, B);

  // One RNG stream per permutation index, derived from the master seed, so
  // counts do not depend on thread scheduling.
  std::vector<std::array<double, 3>> permuted(static_cast<std::size_t>(n_permutations));
  const std::size_t block = static_cast<std::size_t>(A) * static_cast<std::size_t>(B);
  parallel_for(static_cast<std::size_t>(n_permutations), [&](std::size_t pi) {
    auto rng = make_rng(derive_seed(seed, pi));
    std::vector<double> shuffled = flat;
    if (scheme == PermScheme::Free) {
      fisher_yates(shuffled, rng);
    } else {
      for (int i = 0; i < n; ++i) {
        std::vector<double> sub(shuffled.begin() + static_cast<long>(i * block),
                                shuffled.begin() + static_cast<long>((i + 1) * block));
        fisher_yates(sub, rng);
        std::copy(sub.begin(), sub.end(), shuffled.begin() + static_cast<long>(i * block));
      }
    }
    permuted[pi] = rm_anova_f_flat(shuffled, n, A, B);
  });

  const char* names[3] = {name_a.c_str(), name_b.c_str(), "interaction"};
  std::vector<EffectReport> reports;
  for (int e = 0; e < 3; ++e) {
    int count = 0;
    for (const auto& f : permuted) {
      if (f[static_cast<std::size_t>(e)] >= observed[static_cast<std::size_t>(e)]) ++count;
    }
    EffectReport rep;
    rep.effect = names[e];
    rep.f = observed[static_cast<std::size_t>(e)];
    rep.p = (1.0 + count) / (1.0 + n_permutations);
    rep.n_permutations = n_permutations;
    rep.seed = seed;
    reports.push_back(std::move(rep));
  }
  return reports;
}

TwoWayAnovaResult two_way_anova(const std::vector<std::vector<double>>& values) {
  const int n = static_cast<int>(values.size());
  if (n < 2) throw ValidationError("two_way_anova: needs >= 2 subjects");
  const int S = static_cast<int>(values.front().size());
  if (S < 2) throw ValidationError("two_way_anova: needs >= 2 sessions");
  for (const auto& row : values) {
    if (static_cast<int>(row.size()) != S) throw ValidationError("two_way_anova: ragged table");
  }

  std::vector<double> all;
  all.reserve(static_cast<std::size_t>(n * S));
  for (const auto& row : values) all.insert(all.end(), row.begin(), row.end());
  const double grand = mean_of(all);
  const double sd_all = sample_sd(all);

  double ss_total = 0.0;
  for (double v : all) ss_total += (v - grand) * (v - grand);
  double ss_subj = 0.0;
  for (const auto& row : values) {
    const double m = mean_of(row);
    ss_subj += (m - grand) * (m - grand);
  }
  ss_subj *= S;
  double ss_sess = 0.0;
  for (int s = 0; s < S; ++s) {
    double m = 0.0;
    for (int i = 0; i < n; ++i) m += values[static_cast<std::size_t>(i)][static_cast<std::size_t>(s)];
    m /= n;
    ss_sess += (m - grand) * (m - grand);
  }
  ss_sess *= n;
  const double ss_err = std::max(0.0, ss_total - ss_subj - ss_sess);
  const int df_sess = S - 1;
  const int df_err = (n - 1) * (S - 1);

  const double ms_sess = ss_sess / df_sess;
  const double ms_err = ss_err / df_err;
  const bool session_degenerate = !(ms_err > 1e-14 * (1.0 + ms_sess));
  const bool grand_degenerate = !(sd_all > 0);
  if (session_degenerate && grand_degenerate) {
    throw NumericError("two_way_anova: degenerate variance (all values identical)");
  }

  TwoWayAnovaResult res;
  if (session_degenerate) {
    res.f_session = ms_sess > 1e-300 ? kHugeF : 0.0;
    res.p_session = res.f_session > 0 ? 0.0 : 1.0;
  } else {
    res.f_session = ms_sess / ms_err;
    boost::math::fisher_f_distribution<> fd(df_sess, df_err);
    res.p_session = boost::math::cdf(boost::math::complement(fd, res.f_session));
  }
  if (grand_degenerate) {
    // grand mean nonzero with zero spread: infinitely significant
    res.t_grandmean = grand > 0 ? kHugeF : -kHugeF;
    res.p_grandmean = 0.0;
  } else {
    const double N = static_cast<double>(all.size());
    res.t_grandmean = grand / (sd_all / std::sqrt(N));
    boost::math::students_t_distribution<> td(N - 1.0);
    res.p_grandmean = 2.0 * boost::math::cdf(boost::math::complement(td, std::fabs(res.t_grandmean)));
  }
  return res;
}

RmCorrResult rmcorr(const std::vector<double>& x, const std::vector<double>& y,
                    const std::vector<std::string>& subject_ids) {
  if (x.size() != y.size() || x.size() != subject_ids.size()) {
    throw ValidationError("rmcorr: x, y and subject ids must have equal length");
  }
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < subject_ids.size(); ++i) groups[subject_ids[i]].push_back(i);

  RmCorrResult res;
  std::vector<const std::vector<std::size_t>*> kept;
  for (const auto& [id, idx] : groups) {
    if (idx.size() < 2) {
      res.warnings.push_back("subject " + id + " dropped (single observation)");
    } else {
      kept.push_back(&idx);
    }
  }
  if (kept.empty()) throw ValidationError("rmcorr: all subjects dropped (need >= 2 observations each)");
  if (kept.size() < 2) throw ValidationError("rmcorr: needs >= 2 subjects");

  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  int n_obs = 0;
  for (const auto* idx : kept) {
    double mx = 0.0, my = 0.0;
    for (std::size_t i : *idx) {
      mx += x[i];
      my += y[i];
    }
    mx /= static_cast<double>(idx->size());
    my /= static_cast<double>(idx->size());
    for (std::size_t i : *idx) {
      const double dx = x[i] - mx;
      const double dy = y[i] - my;
      sxx += dx * dx;
      sxy += dx * dy;
      syy += dy * dy;
      ++n_obs;
    }
  }
  res.n_obs = n_obs;
  res.n_subjects = static_cast<int>(kept.size());
  res.df = n_obs - res.n_subjects - 1;
  if (res.df < 1) throw ValidationError("rmcorr: not enough observations for the dof");
  if (!(sxx > 0)) throw NumericError("rmcorr: no within-subject variance in x");

  res.slope = sxy / sxx;
  const double ss_measure = sxy * sxy / sxx;
  const double ss_error = std::max(0.0, syy - ss_measure);
  if (ss_measure + ss_error <= 0) {
    // y constant within every subject: no association measurable
    res.r = 0.0;
    res.p = 1.0;
    return res;
  }
  const double magnitude = std::sqrt(ss_measure / (ss_measure + ss_error));
  res.r = res.slope < 0 ? -magnitude : magnitude;
  if (ss_error <= 1e-14 * ss_measure) {
    res.p = 0.0;  // perfect within-subject fit
    return res;
  }
  const double f = ss_measure / (ss_error / res.df);
  boost::math::fisher_f_distribution<> fd(1.0, static_cast<double>(res.df));
  res.p = boost::math::cdf(boost::math::complement(fd, f));
  return res;
}

DeltaTable delta_features(const FeatureTable& table) {
  DeltaTable out;
  for (const auto& subject : table.subjects()) {
    for (const auto& session : table.sessions()) {
      for (const auto& couple : table.couples()) {
        const CellAggregate* rest = table.cell(subject, session, Condition::Rest, couple);
        const CellAggregate* mi = table.cell(subject, session, Condition::MI, couple);
        const bool rest_ok = rest && rest->mean_length.has_value();
        const bool mi_ok = mi && mi->mean_length.has_value();
        if (!rest_ok || !mi_ok) {
          out.warnings.push_back("(" + subject + ", session " + session + ", " + couple.tag() +
                                 "): skipped, missing " +
                                 (!rest_ok && !mi_ok ? "both conditions"
                                  : !rest_ok         ? "Rest"
                                                     : "MI"));
          continue;
        }
        DeltaRow row;
        row.subject = subject;
        row.session = session;
        row.couple = couple;
        row.delta_length = *rest->mean_length - *mi->mean_length;
        row.delta_activations = *rest->mean_weighted_activations - *mi->mean_weighted_activations;
        out.rows.push_back(std::move(row));
      }
    }
  }
  return out;
}

double silverman_bandwidth(const std::vector<double>& values) {
  if (values.size() < 2) throw ValidationError("density: needs >= 2 values");
  const double sd = sample_sd(values);
  const double iqr = quantile_type7(values, 0.75) - quantile_type7(values, 0.25);
  double spread = sd;
  if (iqr > 0) spread = std::min(spread, iqr / 1.34);
  if (!(spread > 0)) throw NumericError("density: degenerate sample (no spread)");
  return 0.9 * spread * std::pow(static_cast<double>(values.size()), -0.2);
}

DensityCurve density_report(const std::vector<double>& values, const DensityGrid& grid) {
  for (double v : values) {
    if (!std::isfinite(v)) throw ValidationError("density: non-finite value");
  }
  if (grid.n < 2) throw ValidationError("density: grid needs >= 2 points");
  if (!(grid.hi > grid.lo)) throw ValidationError("density: empty grid range");
  const double h = silverman_bandwidth(values);

  DensityCurve curve;
  curve.bandwidth = h;
  curve.x.resize(static_cast<std::size_t>(grid.n));
  curve.pdf.resize(static_cast<std::size_t>(grid.n));
  const double step = (grid.hi - grid.lo) / (grid.n - 1);
  const double norm = 1.0 / (static_cast<double>(values.size()) * h * std::sqrt(2.0 * M_PI));
  for (int i = 0; i < grid.n; ++i) {
    const double xi = grid.lo + step * i;
    double acc = 0.0;
    for (double v : values) {
      const double u = (xi - v) / h;
      acc += std::exp(-0.5 * u * u);
    }
    curve.x[static_cast<std::size_t>(i)] = xi;
    curve.pdf[static_cast<std::size_t>(i)] = acc * norm;
  }
  return curve;
}

DensityCurve density_report(const std::vector<double>& values, int n_points) {
  const double h = silverman_bandwidth(values);
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  DensityGrid grid;
  grid.lo = *lo - 4.0 * h;
  grid.hi = *hi + 4.0 * h;
  grid.n = n_points;
  return density_report(values, grid);
}

}  // namespace avbci
