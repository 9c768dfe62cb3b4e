#ifndef AVBCI_ARTIFACTS_HPP
#define AVBCI_ARTIFACTS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avbci/avalanche.hpp"
#include "avbci/dataio.hpp"
#include "avbci/longitudinal.hpp"
#include "avbci/roiselect.hpp"
#include "avbci/stats.hpp"

namespace avbci {

extern const char* kVersion;

/// Reference Bonferroni-corrected threshold quoted in the Hit/Miss report.
constexpr double kBonferroniReferenceP = 0.0011;

/// Writes features.csv, roi_profiles.csv and provenance.json into `dir`.
void write_feature_table(const FeatureTable& table, const std::string& dir,
                         const nlohmann::json& provenance_inputs);

/// Loads a directory written by write_feature_table. Throws UpstreamError
/// when the artifacts are absent.
FeatureTable load_feature_table(const std::string& dir);

struct GridSpec {
  std::string mode = "canonical";  // canonical | file | explicit
  std::string file;                 // grid JSON path for mode=file
  std::vector<ParameterCouple> explicit_couples;
};

std::vector<ParameterCouple> resolve_grid(const GridSpec& spec, double sampling_rate_hz);

struct FeatureRunOptions {
  GridSpec grid;
  Excursion excursion = Excursion::Abs;
  TrialFilter filter = TrialFilter::All;
  std::string roi_selection_file;  // empty = all ROIs
};

/// features stage: filter -> (optional per-couple ROI restriction) -> extract.
FeatureTable run_features(const Dataset& dataset, const FeatureRunOptions& options);

struct StatsOptions {
  TrialFilter filter = TrialFilter::All;
  int n_permutations = 10000;
  std::uint64_t seed = 1234;
  PermScheme scheme = PermScheme::Free;
};

/// The full battery: permutation RM-ANOVA (condition, session, interaction),
/// Friedman per condition, Wilcoxon per session, per feature and couple;
/// plus the final-session Hit/Miss section when labels exist.
nlohmann::json run_stats_battery(const Dataset& dataset, const FeatureTable& table,
                                 const StatsOptions& options);

nlohmann::json run_rmcorr(const Dataset& dataset, const FeatureTable& table);

nlohmann::json run_roi_selection(const Dataset& dataset, const FeatureTable& table, double alpha);

struct PredictOptions {
  ModelKind kind = ModelKind::Lsvc;
  bool shuffle_control = false;
  double chance = 57.0;
  std::uint64_t seed = 1234;
  std::optional<ParameterCouple> couple;  // required unless the table has exactly one
};

nlohmann::json run_predict(const Dataset& dataset, const FeatureTable& table,
                           const PredictOptions& options);

/// Scans `artifact_dir` for stage outputs and writes summary.txt, per-couple
/// effect tables, rmcorr trend tables and density-grid CSVs into `out_dir`.
/// Returns a json listing produced files and flagged gaps.
nlohmann::json run_report(const std::string& artifact_dir, const std::string& out_dir);

void write_json(const nlohmann::json& j, const std::string& path);
nlohmann::json read_json(const std::string& path, bool upstream);

/// provenance.json: commands record inputs, options, seeds, version and the
/// only timestamp in any artifact.
void write_provenance(const std::string& dir, const std::string& command,
                      const nlohmann::json& inputs);

}  // namespace avbci

#endif
