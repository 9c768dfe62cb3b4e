#ifndef AVBCI_AVALANCHE_HPP
#define AVBCI_AVALANCHE_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "avbci/dataio.hpp"

namespace avbci {

/// A (z-threshold multiplier, minimum duration) pair. On z-scored signals the
/// threshold mu + k*sigma is numerically k, so only k is stored.
struct ParameterCouple {
  int k = 0;
  int min_duration_samples = 0;
  double min_duration_ms = 0.0;  // informational
  bool extended = false;         // outside the published grid

  bool operator==(const ParameterCouple& o) const {
    return k == o.k && min_duration_samples == o.min_duration_samples;
  }
  bool operator<(const ParameterCouple& o) const {
    return std::tie(k, min_duration_samples) < std::tie(o.k, o.min_duration_samples);
  }
  std::string tag() const {
    return "k" + std::to_string(k) + "_d" + std::to_string(min_duration_samples);
  }
};

/// Converts a minimum duration in ms to samples. At 250 Hz the published
/// counts {5 ms -> 2, 50 ms -> 12, 80 ms -> 20} are pinned; anything else
/// rounds to the nearest integer with a floor of 2.
int ms_to_samples(double duration_ms, double sampling_rate_hz);
/// Inverse convenience for labeling: samples -> ms (uses the same pinned
/// table at 250 Hz, otherwise samples / rate * 1000).
double samples_to_ms(int samples, double sampling_rate_hz);

/// The ten published (z-threshold, minimum duration) couples.
std::vector<ParameterCouple> canonical_grid(double sampling_rate_hz);

/// Validates a single couple against the published grid (sets `extended`
/// when it falls outside it).
ParameterCouple make_couple(int k, int min_duration_samples, double sampling_rate_hz);

enum class Excursion { Abs, Positive };
Excursion excursion_from_string(const std::string& s);
const char* to_string(Excursion e);

/// Per-ROI baseline mean and standard deviation used for z-scoring.
struct Baseline {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;  // sample sd (n-1 denominator)
};

/// Baseline over the columns of one matrix.
Baseline compute_baseline(const Eigen::MatrixXd& data);
/// Baseline over a set of trials of one (subject, session), concatenated in
/// time. Throws ValidationError naming the ROI if any row has zero variance.
Baseline compute_baseline(const std::vector<const Eigen::MatrixXd*>& trials);

/// z[r][t] = (x[r][t] - mean[r]) / sd[r]. Throws on zero-variance ROI.
Eigen::MatrixXd normalize(const Eigen::MatrixXd& data, const Baseline& baseline);

using BinaryMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// 1 where the excursion exceeds k (|z| > k, or z > k in Positive mode).
BinaryMatrix binarize(const Eigen::MatrixXd& z, double k, Excursion mode = Excursion::Abs);

/// Half-open interval of network activity, with its activation bookkeeping.
struct AvalancheSegment {
  int start = 0;  // inclusive
  int end = 0;    // exclusive
  int length() const { return end - start; }
  long activation_count = 0;        // number of 1s in the binary submatrix
  std::vector<long> active_rois;    // per-ROI activation counts over [start, end)
};

/// Maximal runs of columns with >= 1 active ROI, filtered to
/// length >= min_duration_samples, in temporal order.
std::vector<AvalancheSegment> detect_avalanches(const BinaryMatrix& activity,
                                                int min_duration_samples);

/// Trial-level features. Fields are empty optionals when the trial produced
/// no avalanches, so downstream means are not biased toward zero.
struct TrialFeatures {
  std::optional<double> mean_avalanche_length;      // samples
  std::optional<double> weighted_mean_activations;  // length-weighted mean count
  int n_avalanches = 0;
  std::vector<double> roi_profile;  // per-ROI length-weighted mean activation; empty if undefined
};

TrialFeatures trial_features(const std::vector<AvalancheSegment>& segments,
                             const BinaryMatrix& activity);

/// Coordinates of one feature-table row.
struct FeatureKey {
  std::string subject;
  std::string session;
  Condition condition = Condition::Rest;
  int trial = 0;
  ParameterCouple couple;
};

struct FeatureRow {
  FeatureKey key;
  TrialFeatures features;
};

/// Per-(subject, session, condition, couple) aggregate across trials.
/// Trials with no avalanches are excluded from the means and counted.
struct CellAggregate {
  std::optional<double> mean_length;
  std::optional<double> mean_weighted_activations;
  std::vector<double> mean_roi_profile;  // empty when no defined trial
  int n_trials = 0;
  int n_excluded = 0;
};

class FeatureTable {
 public:
  using CellKey = std::tuple<std::string, std::string, Condition, ParameterCouple>;

  FeatureTable() = default;
  FeatureTable(std::vector<ParameterCouple> couples, std::vector<FeatureRow> rows,
               std::vector<std::string> subjects, std::vector<std::string> sessions,
               int n_rois, double sampling_rate_hz);

  const std::vector<ParameterCouple>& couples() const { return couples_; }
  const std::vector<FeatureRow>& rows() const { return rows_; }
  const std::vector<std::string>& subjects() const { return subjects_; }
  const std::vector<std::string>& sessions() const { return sessions_; }
  int n_rois() const { return n_rois_; }
  double sampling_rate_hz() const { return sampling_rate_hz_; }

  const CellAggregate* cell(const std::string& subject, const std::string& session,
                            Condition condition, const ParameterCouple& couple) const;
  /// Trial-level rows of one cell, ordered by trial index.
  std::vector<const FeatureRow*> cell_rows(const std::string& subject, const std::string& session,
                                           Condition condition,
                                           const ParameterCouple& couple) const;

 private:
  std::vector<ParameterCouple> couples_;
  std::vector<FeatureRow> rows_;
  std::vector<std::string> subjects_;
  std::vector<std::string> sessions_;
  int n_rois_ = 0;
  double sampling_rate_hz_ = 0.0;
  std::map<CellKey, CellAggregate> cells_;
  std::map<CellKey, std::vector<std::size_t>> cell_rows_;

  void build_aggregates();
};

struct FeatureOptions {
  Excursion excursion = Excursion::Abs;
  /// Restrict detection to these ROI rows (empty = all). Baselines stay
  /// per-ROI, so restriction equals physically truncating the dataset.
  std::vector<int> roi_subset;
};

/// Runs normalize -> binarize -> detect -> features for every trial of the
/// view and every couple. Cells fan out in parallel; merge order is
/// lexicographic, so the result is independent of thread count.
FeatureTable compute_feature_table(const DatasetView& view,
                                   const std::vector<ParameterCouple>& couples,
                                   const FeatureOptions& options = {});
FeatureTable compute_feature_table(const Dataset& dataset,
                                   const std::vector<ParameterCouple>& couples,
                                   const FeatureOptions& options = {});

}  // namespace avbci

#endif
