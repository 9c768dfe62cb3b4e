#include "avbci/roiselect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace avbci {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
// Stand-in t for a constant nonzero difference (zero variance); finite so the
// downstream ANOVA stays well-defined.
constexpr double kSaturatedT = 1e6;

}  // namespace

RoiReference roi_reference_from_string(const std::string& s) {
  if (s == "max") return RoiReference::Max;
  if (s == "mean") return RoiReference::Mean;
  if (s == "median") return RoiReference::Median;
  if (s == "min") return RoiReference::Min;
  throw ValidationError("unknown ROI reference '" + s + "' (expected max, mean, median or min)");
}

const char* to_string(RoiReference r) {
  switch (r) {
    case RoiReference::Max: return "max";
    case RoiReference::Mean: return "mean";
    case RoiReference::Median: return "median";
    default: return "min";
  }
}

double& RoiActivations::at(int subject, int session, Condition condition, int roi) {
  const std::size_t cond = condition == Condition::Rest ? 0 : 1;
  return values[((static_cast<std::size_t>(subject) * sessions.size() +
                  static_cast<std::size_t>(session)) *
                     2 +
                 cond) *
                    static_cast<std::size_t>(n_rois) +
                static_cast<std::size_t>(roi)];
}

double RoiActivations::at(int subject, int session, Condition condition, int roi) const {
  return const_cast<RoiActivations*>(this)->at(subject, session, condition, roi);
}

RoiActivations roi_activations(const FeatureTable& table, const ParameterCouple& couple) {
  RoiActivations act;
  act.subjects = table.subjects();
  act.sessions = table.sessions();
  act.n_rois = table.n_rois();
  act.values.assign(act.subjects.size() * act.sessions.size() * 2 *
                        static_cast<std::size_t>(act.n_rois),
                    kNan);
  for (std::size_t i = 0; i < act.subjects.size(); ++i) {
    for (std::size_t s = 0; s < act.sessions.size(); ++s) {
      for (Condition cond : {Condition::Rest, Condition::MI}) {
        const CellAggregate* cell = table.cell(act.subjects[i], act.sessions[s], cond, couple);
        if (!cell || cell->mean_roi_profile.empty()) continue;
        for (int r = 0; r < act.n_rois; ++r) {
          act.at(static_cast<int>(i), static_cast<int>(s), cond, r) =
              cell->mean_roi_profile[static_cast<std::size_t>(r)];
        }
      }
    }
  }
  return act;
}

RoiActivations normalize_roi(const RoiActivations& activations, RoiReference reference) {
  if (activations.sessions.empty()) throw ValidationError("normalize_roi: no sessions");
  RoiActivations out = activations;
  for (std::size_t i = 0; i < activations.subjects.size(); ++i) {
    // reference statistic over the first Rest session's ROI values
    std::vector<double> rest1;
    for (int r = 0; r < activations.n_rois; ++r) {
      const double v = activations.at(static_cast<int>(i), 0, Condition::Rest, r);
      if (std::isfinite(v)) rest1.push_back(v);
    }
    if (rest1.empty()) {
      throw ValidationError("normalize_roi: subject " + activations.subjects[i] +
                            " has no first-Rest-session activations");
    }
    double ref = 0.0;
    switch (reference) {
      case RoiReference::Max: ref = *std::max_element(rest1.begin(), rest1.end()); break;
      case RoiReference::Min: ref = *std::min_element(rest1.begin(), rest1.end()); break;
      case RoiReference::Mean: {
        for (double v : rest1) ref += v;
        ref /= static_cast<double>(rest1.size());
        break;
      }
      case RoiReference::Median: {
        std::sort(rest1.begin(), rest1.end());
        const std::size_t m = rest1.size() / 2;
        ref = rest1.size() % 2 ? rest1[m] : 0.5 * (rest1[m - 1] + rest1[m]);
        break;
      }
    }
    if (!(ref > 0)) {
      throw ValidationError("normalize_roi: subject " + activations.subjects[i] +
                            " has non-positive reference activation");
    }
    for (std::size_t s = 0; s < activations.sessions.size(); ++s) {
      for (Condition cond : {Condition::Rest, Condition::MI}) {
        for (int r = 0; r < activations.n_rois; ++r) {
          double& v = out.at(static_cast<int>(i), static_cast<int>(s), cond, r);
          if (std::isfinite(v)) v = v / ref * 100.0;
        }
      }
    }
  }
  return out;
}

std::vector<TMap> t_maps(const FeatureTable& table, const ParameterCouple& couple) {
  std::vector<TMap> maps;
  const int n_rois = table.n_rois();
  for (const auto& subject : table.subjects()) {
    for (const auto& session : table.sessions()) {
      TMap map;
      map.subject = subject;
      map.session = session;

      auto mi_rows = table.cell_rows(subject, session, Condition::MI, couple);
      auto rest_rows = table.cell_rows(subject, session, Condition::Rest, couple);
      auto defined = [](std::vector<const FeatureRow*>& rows) {
        rows.erase(std::remove_if(rows.begin(), rows.end(),
                                  [](const FeatureRow* r) { return r->features.roi_profile.empty(); }),
                   rows.end());
      };
      defined(mi_rows);
      defined(rest_rows);

      const int n_pairs = static_cast<int>(std::min(mi_rows.size(), rest_rows.size()));
      if (n_pairs < 2) {
        map.missing = true;
        map.note = "fewer than 2 defined trials per condition";
        maps.push_back(std::move(map));
        continue;
      }
      if (mi_rows.size() != rest_rows.size()) {
        map.note = "unequal trial counts truncated to " + std::to_string(n_pairs);
      }

      map.t.resize(static_cast<std::size_t>(n_rois));
      for (int r = 0; r < n_rois; ++r) {
        double mean_d = 0.0;
        for (int p = 0; p < n_pairs; ++p) {
          mean_d += mi_rows[static_cast<std::size_t>(p)]->features.roi_profile[static_cast<std::size_t>(r)] -
                    rest_rows[static_cast<std::size_t>(p)]->features.roi_profile[static_cast<std::size_t>(r)];
        }
        mean_d /= n_pairs;
        double ss = 0.0;
        for (int p = 0; p < n_pairs; ++p) {
          const double d =
              mi_rows[static_cast<std::size_t>(p)]->features.roi_profile[static_cast<std::size_t>(r)] -
              rest_rows[static_cast<std::size_t>(p)]->features.roi_profile[static_cast<std::size_t>(r)] -
              mean_d;
          ss += d * d;
        }
        const double sd = std::sqrt(ss / (n_pairs - 1));
        double t;
        if (sd > 0) {
          t = mean_d / (sd / std::sqrt(static_cast<double>(n_pairs)));
        } else {
          t = mean_d == 0.0 ? 0.0 : (mean_d > 0 ? kSaturatedT : -kSaturatedT);
        }
        map.t[static_cast<std::size_t>(r)] = t;
      }
      maps.push_back(std::move(map));
    }
  }
  return maps;
}

RoiSelection select_rois(const std::vector<TMap>& maps, const ParameterCouple& couple,
                         double alpha, int n_rois) {
  if (alpha < 0 || alpha > 1) throw ValidationError("select_rois: alpha must be in [0, 1]");
  std::vector<const TMap*> complete;
  for (const auto& m : maps) {
    if (m.missing) {
      throw ValidationError("select_rois: missing t-map for (" + m.subject + ", session " +
                            m.session + "): " + m.note);
    }
    complete.push_back(&m);
  }
  if (complete.empty()) throw ValidationError("select_rois: no t-maps");

  // subjects x sessions layout
  std::map<std::string, std::map<std::string, const TMap*>> grid;
  for (const TMap* m : complete) grid[m->subject][m->session] = m;

  RoiSelection sel;
  sel.couple = couple;
  sel.alpha = alpha;
  sel.p_session.resize(static_cast<std::size_t>(n_rois), 1.0);
  sel.p_grandmean.resize(static_cast<std::size_t>(n_rois), 1.0);

  for (int r = 0; r < n_rois; ++r) {
    std::vector<std::vector<double>> values;
    for (const auto& [subject, sessions] : grid) {
      std::vector<double> row;
      for (const auto& [session, m] : sessions) row.push_back(m->t[static_cast<std::size_t>(r)]);
      values.push_back(std::move(row));
    }
    try {
      const TwoWayAnovaResult res = two_way_anova(values);
      sel.p_session[static_cast<std::size_t>(r)] = res.p_session;
      sel.p_grandmean[static_cast<std::size_t>(r)] = res.p_grandmean;
    } catch (const Error&) {
      // degenerate ROI (identical t everywhere): leave p = 1
    }
    if (std::min(sel.p_session[static_cast<std::size_t>(r)],
                 sel.p_grandmean[static_cast<std::size_t>(r)]) < alpha) {
      sel.selected.push_back(r);
    }
  }
  return sel;
}

FeatureTable restrict_and_recompute(const DatasetView& view, const RoiSelection& selection,
                                    const std::vector<ParameterCouple>& couples,
                                    Excursion excursion) {
  if (selection.selected.empty()) {
    throw ValidationError("restrict_and_recompute: no ROIs selected for " + selection.couple.tag());
  }
  FeatureOptions options;
  options.excursion = excursion;
  options.roi_subset = selection.selected;
  return compute_feature_table(view, couples, options);
}

}  // namespace avbci
