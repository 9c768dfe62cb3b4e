#ifndef AVBCI_ROISELECT_HPP
#define AVBCI_ROISELECT_HPP

#include <optional>
#include <string>
#include <vector>

#include "avbci/avalanche.hpp"
#include "avbci/stats.hpp"

namespace avbci {

enum class RoiReference { Max, Mean, Median, Min };
RoiReference roi_reference_from_string(const std::string& s);
const char* to_string(RoiReference r);

/// Per-(subject, ROI, session, condition) activation values, as produced from
/// the feature table's aggregated ROI profiles.
struct RoiActivations {
  std::vector<std::string> subjects;
  std::vector<std::string> sessions;
  int n_rois = 0;
  /// value(subject, session, condition, roi); missing cells are NaN
  std::vector<double> values;

  double& at(int subject, int session, Condition condition, int roi);
  double at(int subject, int session, Condition condition, int roi) const;
};

RoiActivations roi_activations(const FeatureTable& table, const ParameterCouple& couple);

/// Eq.-style normalization: each subject's values scaled to percent of that
/// subject's reference statistic over the first Rest session (default: max
/// over ROIs). Throws ValidationError naming the subject when the reference
/// is not strictly positive.
RoiActivations normalize_roi(const RoiActivations& activations,
                             RoiReference reference = RoiReference::Max);

/// One subject-session t-map: per-ROI paired t of MI vs Rest trial-level ROI
/// profiles. Pairing is by trial rank; unequal counts truncate to the
/// smaller side (noted). Cells with < 2 trials per condition are missing.
struct TMap {
  std::string subject;
  std::string session;
  std::vector<double> t;  // length n_rois
  bool missing = false;
  std::string note;
};

std::vector<TMap> t_maps(const FeatureTable& table, const ParameterCouple& couple);

struct RoiSelection {
  ParameterCouple couple;
  std::vector<int> selected;  // roi indices with min(p_session, p_grandmean) < alpha
  std::vector<double> p_session;
  std::vector<double> p_grandmean;
  double alpha = 0.05;
};

/// Per ROI, a repeated-measures ANOVA over the subjects x sessions t-values
/// (session effect) plus a grand-mean-vs-zero test; a ROI is selected when
/// either p falls under alpha. Degenerate ROIs (no variance anywhere) get
/// p = 1 and are never selected.
RoiSelection select_rois(const std::vector<TMap>& maps, const ParameterCouple& couple,
                         double alpha, int n_rois);

/// Recomputes the full feature table on the ROI-restricted dataset (segment
/// boundaries change because column activity is evaluated over fewer rows).
FeatureTable restrict_and_recompute(const DatasetView& view, const RoiSelection& selection,
                                    const std::vector<ParameterCouple>& couples,
                                    Excursion excursion = Excursion::Abs);

}  // namespace avbci

#endif
