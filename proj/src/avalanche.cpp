#include "avbci/avalanche.hpp"

#include <algorithm>
#include <cmath>

#include "parallel.hpp"

namespace avbci {

namespace {

constexpr double kCanonicalRate = 250.0;

// Published sample counts at 250 Hz; the paper's stated counts win over
// arithmetic (5 ms * 250 Hz = 1.25, reported as 2 samples).
const std::pair<double, int> kPinnedDurations[] = {{5.0, 2}, {50.0, 12}, {80.0, 20}};

}  // namespace

int ms_to_samples(double duration_ms, double sampling_rate_hz) {
  if (!(duration_ms > 0) || !(sampling_rate_hz > 0)) {
    throw ValidationError("ms_to_samples: duration and sampling rate must be positive");
  }
  if (sampling_rate_hz == kCanonicalRate) {
    for (const auto& [ms, samples] : kPinnedDurations) {
      if (duration_ms == ms) return samples;
    }
  }
  const int rounded = static_cast<int>(std::lround(duration_ms * sampling_rate_hz / 1000.0));
  return std::max(2, rounded);
}

double samples_to_ms(int samples, double sampling_rate_hz) {
  if (samples <= 0 || !(sampling_rate_hz > 0)) {
    throw ValidationError("samples_to_ms: inputs must be positive");
  }
  if (sampling_rate_hz == kCanonicalRate) {
    for (const auto& [ms, s] : kPinnedDurations) {
      if (samples == s) return ms;
    }
  }
  return samples / sampling_rate_hz * 1000.0;
}

std::vector<ParameterCouple> canonical_grid(double sampling_rate_hz) {
  // Table of valid couples: k in {1,2} x {5,50,80} ms, k=3 x {5,50} ms,
  // k in {4,5} x {5} ms.
  static const std::vector<std::pair<int, std::vector<double>>> grid = {
      {1, {5, 50, 80}}, {2, {5, 50, 80}}, {3, {5, 50}}, {4, {5}}, {5, {5}}};
  std::vector<ParameterCouple> couples;
  for (const auto& [k, durations] : grid) {
    for (double ms : durations) {
      ParameterCouple c;
      c.k = k;
      c.min_duration_ms = ms;
      c.min_duration_samples = ms_to_samples(ms, sampling_rate_hz);
      couples.push_back(c);
    }
  }
  return couples;
}

ParameterCouple make_couple(int k, int min_duration_samples, double sampling_rate_hz) {
  if (k < 1) throw ValidationError("z-threshold multiplier k must be >= 1");
  if (min_duration_samples < 1) throw ValidationError("minimum duration must be >= 1 sample");
  ParameterCouple c;
  c.k = k;
  c.min_duration_samples = min_duration_samples;
  c.min_duration_ms = samples_to_ms(min_duration_samples, sampling_rate_hz);
  c.extended = true;
  for (const auto& known : canonical_grid(sampling_rate_hz)) {
    if (known == c) {
      c.extended = false;
      break;
    }
  }
  return c;
}

Excursion excursion_from_string(const std::string& s) {
  if (s == "abs") return Excursion::Abs;
  if (s == "positive") return Excursion::Positive;
  throw ValidationError("unknown excursion mode '" + s + "' (expected abs or positive)");
}

const char* to_string(Excursion e) { return e == Excursion::Abs ? "abs" : "positive"; }

Baseline compute_baseline(const Eigen::MatrixXd& data) {
  std::vector<const Eigen::MatrixXd*> one{&data};
  return compute_baseline(one);
}

Baseline compute_baseline(const std::vector<const Eigen::MatrixXd*>& trials) {
  if (trials.empty()) throw ValidationError("baseline: no trials");
  const int n_rois = static_cast<int>(trials.front()->rows());
  long total = 0;
  for (const auto* t : trials) {
    if (t->rows() != n_rois) throw ValidationError("baseline: inconsistent ROI counts");
    total += t->cols();
  }
  if (total < 2) throw ValidationError("baseline: fewer than 2 samples");

  Baseline b;
  b.mean = Eigen::VectorXd::Zero(n_rois);
  b.sd = Eigen::VectorXd::Zero(n_rois);
  for (const auto* t : trials) b.mean += t->rowwise().sum();
  b.mean /= static_cast<double>(total);
  for (const auto* t : trials) {
    b.sd += (t->colwise() - b.mean).array().square().matrix().rowwise().sum();
  }
  b.sd = (b.sd / static_cast<double>(total - 1)).array().sqrt();
  for (int r = 0; r < n_rois; ++r) {
    if (!(b.sd[r] > 0)) {
      throw ValidationError("zero-variance ROI " + std::to_string(r) +
                            ": constant signal cannot be z-scored");
    }
  }
  return b;
}

Eigen::MatrixXd normalize(const Eigen::MatrixXd& data, const Baseline& baseline) {
  if (data.rows() != baseline.mean.size()) {
    throw ValidationError("normalize: baseline has " + std::to_string(baseline.mean.size()) +
                          " ROIs, data has " + std::to_string(data.rows()));
  }
  for (int r = 0; r < data.rows(); ++r) {
    if (!(baseline.sd[r] > 0)) {
      throw ValidationError("zero-variance ROI " + std::to_string(r) +
                            ": constant signal cannot be z-scored");
    }
  }
  return ((data.colwise() - baseline.mean).array().colwise() / baseline.sd.array()).matrix();
}

BinaryMatrix binarize(const Eigen::MatrixXd& z, double k, Excursion mode) {
  if (k < 1.0) throw ValidationError("binarize: threshold multiplier k must be >= 1");
  BinaryMatrix out(z.rows(), z.cols());
  if (mode == Excursion::Abs) {
    out = (z.array().abs() > k).cast<std::uint8_t>();
  } else {
    out = (z.array() > k).cast<std::uint8_t>();
  }
  return out;
}

std::vector<AvalancheSegment> detect_avalanches(const BinaryMatrix& activity,
                                                int min_duration_samples) {
  if (activity.size() == 0) throw ValidationError("detect_avalanches: empty matrix");
  if (min_duration_samples < 1) {
    throw ValidationError("detect_avalanches: minimum duration must be >= 1");
  }
  const int n_rois = static_cast<int>(activity.rows());
  const int n_samples = static_cast<int>(activity.cols());

  std::vector<AvalancheSegment> segments;
  int run_start = -1;
  for (int t = 0; t <= n_samples; ++t) {
    const bool active = t < n_samples && (activity.col(t).array() != 0).any();
    if (active && run_start < 0) {
      run_start = t;
    } else if (!active && run_start >= 0) {
      const int run_end = t;
      if (run_end - run_start >= min_duration_samples) {
        AvalancheSegment seg;
        seg.start = run_start;
        seg.end = run_end;
        seg.active_rois.assign(static_cast<std::size_t>(n_rois), 0);
        for (int c = run_start; c < run_end; ++c) {
          for (int r = 0; r < n_rois; ++r) {
            if (activity(r, c)) {
              ++seg.active_rois[static_cast<std::size_t>(r)];
              ++seg.activation_count;
            }
          }
        }
        segments.push_back(std::move(seg));
      }
      run_start = -1;
    }
  }
  return segments;
}

TrialFeatures trial_features(const std::vector<AvalancheSegment>& segments,
                             const BinaryMatrix& activity) {
  TrialFeatures f;
  f.n_avalanches = static_cast<int>(segments.size());
  if (segments.empty()) return f;

  const int n_rois = static_cast<int>(activity.rows());
  double total_length = 0.0;
  double weighted_count = 0.0;
  std::vector<double> weighted_rois(static_cast<std::size_t>(n_rois), 0.0);
  for (const auto& seg : segments) {
    const double len = seg.length();
    total_length += len;
    weighted_count += static_cast<double>(seg.activation_count) * len;
    for (int r = 0; r < n_rois; ++r) {
      weighted_rois[static_cast<std::size_t>(r)] +=
          static_cast<double>(seg.active_rois[static_cast<std::size_t>(r)]) * len;
    }
  }
  f.mean_avalanche_length = total_length / static_cast<double>(segments.size());
  f.weighted_mean_activations = weighted_count / total_length;
  f.roi_profile.resize(static_cast<std::size_t>(n_rois));
  for (int r = 0; r < n_rois; ++r) {
    f.roi_profile[static_cast<std::size_t>(r)] = weighted_rois[static_cast<std::size_t>(r)] / total_length;
  }
  return f;
}

FeatureTable::FeatureTable(std::vector<ParameterCouple> couples, std::vector<FeatureRow> rows,
                           std::vector<std::string> subjects, std::vector<std::string> sessions,
                           int n_rois, double sampling_rate_hz)
    : couples_(std::move(couples)),
      rows_(std::move(rows)),
      subjects_(std::move(subjects)),
      sessions_(std::move(sessions)),
      n_rois_(n_rois),
      sampling_rate_hz_(sampling_rate_hz) {
  build_aggregates();
}

void FeatureTable::build_aggregates() {
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const FeatureRow& row = rows_[i];
    CellKey key{row.key.subject, row.key.session, row.key.condition, row.key.couple};
    cell_rows_[key].push_back(i);
  }
  for (auto& [key, indices] : cell_rows_) {
    CellAggregate agg;
    agg.n_trials = static_cast<int>(indices.size());
    double sum_len = 0, sum_act = 0;
    std::vector<double> sum_profile;
    int defined = 0;
    for (std::size_t i : indices) {
      const TrialFeatures& f = rows_[i].features;
      if (!f.mean_avalanche_length) {
        ++agg.n_excluded;
        continue;
      }
      ++defined;
      sum_len += *f.mean_avalanche_length;
      sum_act += *f.weighted_mean_activations;
      if (sum_profile.empty()) sum_profile.assign(f.roi_profile.size(), 0.0);
      for (std::size_t r = 0; r < f.roi_profile.size(); ++r) sum_profile[r] += f.roi_profile[r];
    }
    if (defined > 0) {
      agg.mean_length = sum_len / defined;
      agg.mean_weighted_activations = sum_act / defined;
      agg.mean_roi_profile = sum_profile;
      for (auto& v : agg.mean_roi_profile) v /= defined;
    }
    cells_[key] = std::move(agg);
  }
}

const CellAggregate* FeatureTable::cell(const std::string& subject, const std::string& session,
                                        Condition condition, const ParameterCouple& couple) const {
  auto it = cells_.find(CellKey{subject, session, condition, couple});
  return it == cells_.end() ? nullptr : &it->second;
}

std::vector<const FeatureRow*> FeatureTable::cell_rows(const std::string& subject,
                                                       const std::string& session,
                                                       Condition condition,
                                                       const ParameterCouple& couple) const {
  std::vector<const FeatureRow*> out;
  auto it = cell_rows_.find(CellKey{subject, session, condition, couple});
  if (it == cell_rows_.end()) return out;
  for (std::size_t i : it->second) out.push_back(&rows_[i]);
  return out;
}

namespace {

struct SessionCell {
  std::string subject;
  std::string session;
};

}  // namespace

FeatureTable compute_feature_table(const DatasetView& view,
                                   const std::vector<ParameterCouple>& couples,
                                   const FeatureOptions& options) {
  if (couples.empty()) throw ValidationError("compute_feature_table: empty couple grid");
  const Dataset& ds = view.dataset();
  const int n_rois = ds.manifest().n_rois;

  std::vector<int> roi_rows = options.roi_subset;
  if (!roi_rows.empty()) {
    std::sort(roi_rows.begin(), roi_rows.end());
    roi_rows.erase(std::unique(roi_rows.begin(), roi_rows.end()), roi_rows.end());
    for (int r : roi_rows) {
      if (r < 0 || r >= n_rois) {
        throw ValidationError("roi_subset index " + std::to_string(r) + " outside [0, " +
                              std::to_string(n_rois) + ")");
      }
    }
  }

  // Group couples by k so each trial is binarized once per threshold.
  std::vector<ParameterCouple> sorted_couples = couples;
  std::sort(sorted_couples.begin(), sorted_couples.end());

  // One work unit per (subject, session): the normalization baseline is
  // computed over the concatenation of that pair's visible trials.
  std::vector<SessionCell> units;
  for (const auto& subject : ds.manifest().subjects) {
    for (const auto& session : ds.manifest().sessions) {
      units.push_back({subject, session});
    }
  }

  std::vector<std::vector<FeatureRow>> unit_rows(units.size());
  parallel_for(units.size(), [&](std::size_t u) {
    const auto& [subject, session] = units[u];
    std::vector<const TrialRef*> refs;
    for (Condition cond : ds.manifest().conditions) {
      auto cell = view.cell(subject, session, cond);
      refs.insert(refs.end(), cell.begin(), cell.end());
    }
    if (refs.empty()) return;

    std::vector<const Eigen::MatrixXd*> matrices;
    matrices.reserve(refs.size());
    for (const TrialRef* ref : refs) matrices.push_back(&ds.trial(*ref).data);

    Baseline baseline;
    try {
      baseline = compute_baseline(matrices);
    } catch (const Error& e) {
      throw ValidationError("(" + subject + ", session " + session + "): " + e.what());
    }

    for (std::size_t i = 0; i < refs.size(); ++i) {
      const TrialRef& ref = *refs[i];
      Eigen::MatrixXd z;
      try {
        z = normalize(*matrices[i], baseline);
      } catch (const Error& e) {
        throw ValidationError("(" + subject + ", session " + session + ", " +
                              to_string(ref.condition) + ", trial " +
                              std::to_string(ref.trial_index) + "): " + e.what());
      }
      if (!roi_rows.empty()) {
        Eigen::MatrixXd restricted(static_cast<int>(roi_rows.size()), z.cols());
        for (std::size_t r = 0; r < roi_rows.size(); ++r) {
          restricted.row(static_cast<int>(r)) = z.row(roi_rows[r]);
        }
        z = std::move(restricted);
      }

      int current_k = -1;
      BinaryMatrix binary;
      for (const ParameterCouple& couple : sorted_couples) {
        if (couple.k != current_k) {
          binary = binarize(z, couple.k, options.excursion);
          current_k = couple.k;
        }
        auto segments = detect_avalanches(binary, couple.min_duration_samples);
        FeatureRow row;
        row.key = FeatureKey{subject, session, ref.condition, ref.trial_index, couple};
        row.features = trial_features(segments, binary);
        unit_rows[u].push_back(std::move(row));
      }
    }
  });

  std::vector<FeatureRow> rows;
  for (auto& chunk : unit_rows) {
    rows.insert(rows.end(), std::make_move_iterator(chunk.begin()),
                std::make_move_iterator(chunk.end()));
  }
  // Deterministic order: subject, session (manifest order is the unit order),
  // then condition, trial, couple within each unit.
  return FeatureTable(sorted_couples, std::move(rows), ds.manifest().subjects,
                      ds.manifest().sessions,
                      roi_rows.empty() ? n_rois : static_cast<int>(roi_rows.size()),
                      ds.manifest().sampling_rate_hz);
}

FeatureTable compute_feature_table(const Dataset& dataset,
                                   const std::vector<ParameterCouple>& couples,
                                   const FeatureOptions& options) {
  return compute_feature_table(filter_trials(dataset, TrialFilter::All), couples, options);
}

}  // namespace avbci
