#ifndef AVBCI_STATS_HPP
#define AVBCI_STATS_HPP

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "avbci/avalanche.hpp"
#include "avbci/errors.hpp"

namespace avbci {

struct WilcoxonResult {
  double w = 0.0;  // min of the positive/negative rank sums
  double p = 0.0;  // two-sided
  int n = 0;       // pairs after dropping zero differences
  bool exact = false;
};

/// Wilcoxon signed-rank test for paired samples. Zero differences are
/// dropped; ties take midranks. Exact two-sided p by enumerating the sign
/// distribution for n <= 25, normal approximation with tie and continuity
/// corrections otherwise. Requires n >= 5 after dropping.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& x, const std::vector<double>& y);

struct FriedmanResult {
  double chi2 = 0.0;
  double p = 0.0;
  int df = 0;
};

/// Friedman test on a subjects x conditions matrix (within-subject midranks,
/// tie-corrected chi-square, k-1 degrees of freedom).
FriedmanResult friedman(const std::vector<std::vector<double>>& matrix);

struct PairedTResult {
  double t = 0.0;
  int df = 0;
};

/// Paired t statistic: mean(d) / (sd(d)/sqrt(n)), d = x - y.
PairedTResult paired_t(const std::vector<double>& x, const std::vector<double>& y);

enum class PermScheme { Free, WithinSubject };
PermScheme perm_scheme_from_string(const std::string& s);
const char* to_string(PermScheme s);

struct EffectReport {
  std::string effect;  // factor_a | factor_b | interaction (named by caller)
  double f = 0.0;
  double p = 0.0;
  int n_permutations = 0;
  std::uint64_t seed = 0;
};

/// Two-within-factor repeated-measures ANOVA with permutation p-values.
/// cells[subject][a][b] must be complete. Per permutation the dependent
/// variable is shuffled (freely across all cells, or within each subject)
/// and the F statistics recomputed; p = (1 + #{F_perm >= F_obs}) / (1 + N).
/// Effect names: factor A = `name_a`, factor B = `name_b`, interaction.
std::vector<EffectReport> perm_rm_anova(const std::vector<std::vector<std::vector<double>>>& cells,
                                        int n_permutations, std::uint64_t seed,
                                        const std::string& name_a = "condition",
                                        const std::string& name_b = "session",
                                        PermScheme scheme = PermScheme::Free);

/// Observed F statistics only (factor A, factor B, interaction).
std::array<double, 3> rm_anova_f(const std::vector<std::vector<std::vector<double>>>& cells);

struct TwoWayAnovaResult {
  double p_session = 0.0;    // repeated-measures session effect (subject blocked)
  double p_grandmean = 0.0;  // one-sample t of all values against 0
  double f_session = 0.0;
  double t_grandmean = 0.0;
};

/// values[subject][session], complete. Throws NumericError when both the
/// session-effect error term and the grand-mean variance are degenerate.
TwoWayAnovaResult two_way_anova(const std::vector<std::vector<double>>& values);

struct RmCorrResult {
  double r = 0.0;
  int df = 0;
  double p = 0.0;
  double slope = 0.0;  // common within-subject slope
  int n_obs = 0;
  int n_subjects = 0;
  std::vector<std::string> warnings;
};

/// Repeated-measures correlation: ANCOVA with subject as categorical factor
/// and a common slope. Subjects with fewer than two observations are dropped
/// with a warning. r = sign(slope) * sqrt(SS_measure / (SS_measure+SS_error)),
/// df = N - n_subjects - 1, p from F(1, df).
RmCorrResult rmcorr(const std::vector<double>& x, const std::vector<double>& y,
                    const std::vector<std::string>& subject_ids);

/// One (subject, session, couple) row of the delta table (Eq. 2-3 convention:
/// Rest minus MI, recorded in `convention`).
struct DeltaRow {
  std::string subject;
  std::string session;
  ParameterCouple couple;
  double delta_length = 0.0;
  double delta_activations = 0.0;
};

struct DeltaTable {
  std::string convention = "Rest-MI";
  std::vector<DeltaRow> rows;
  std::vector<std::string> warnings;  // skipped cells
};

DeltaTable delta_features(const FeatureTable& table);

struct DensityGrid {
  double lo = 0.0;
  double hi = 0.0;
  int n = 512;
};

struct DensityCurve {
  std::vector<double> x;
  std::vector<double> pdf;
  double bandwidth = 0.0;
};

/// Gaussian kernel density with Silverman's rule-of-thumb bandwidth,
/// evaluated on a uniform grid. Needs >= 2 finite values and a non-degenerate
/// spread. The auto grid pads the data range by 4 bandwidths so the curve
/// integrates to 1 within 1e-3 (trapezoid rule).
DensityCurve density_report(const std::vector<double>& values, const DensityGrid& grid);
DensityCurve density_report(const std::vector<double>& values, int n_points = 512);

double silverman_bandwidth(const std::vector<double>& values);

}  // namespace avbci

#endif
