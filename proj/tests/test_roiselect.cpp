#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "avbci/roiselect.hpp"
#include "avbci/rng.hpp"
#include "avbci/synth.hpp"

using namespace avbci;

namespace {

double gauss(std::mt19937_64& rng) {
  double u1 = uniform_real(rng);
  while (u1 <= 0.0) u1 = uniform_real(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * uniform_real(rng));
}

// Synthetic trial-level table: profile of ROI r ~ N(base_r, 1), with an
// additive MI shift on the planted ROIs.
FeatureTable synthetic_profile_table(int n_subjects, int n_sessions, int n_trials, int n_rois,
                                     const std::vector<int>& planted, double shift,
                                     std::uint64_t seed) {
  const ParameterCouple couple = make_couple(3, 2, 250.0);
  auto rng = make_rng(seed);
  std::vector<FeatureRow> rows;
  std::vector<std::string> subjects, sessions;
  for (int i = 0; i < n_subjects; ++i) subjects.push_back("S" + std::to_string(i));
  for (int s = 0; s < n_sessions; ++s) sessions.push_back(std::to_string(s + 1));
  for (const auto& subject : subjects) {
    for (const auto& session : sessions) {
      for (Condition cond : {Condition::Rest, Condition::MI}) {
        for (int trial = 0; trial < n_trials; ++trial) {
          FeatureRow row;
          row.key = {subject, session, cond, trial, couple};
          row.features.n_avalanches = 3;
          row.features.mean_avalanche_length = 4.0;
          row.features.roi_profile.resize(static_cast<std::size_t>(n_rois));
          double sum = 0.0;
          for (int r = 0; r < n_rois; ++r) {
            double v = 5.0 + 0.1 * r + gauss(rng);
            if (cond == Condition::MI &&
                std::find(planted.begin(), planted.end(), r) != planted.end()) {
              v += shift;
            }
            row.features.roi_profile[static_cast<std::size_t>(r)] = v;
            sum += v;
          }
          row.features.weighted_mean_activations = sum;
          rows.push_back(std::move(row));
        }
      }
    }
  }
  return FeatureTable({couple}, std::move(rows), subjects, sessions, n_rois, 250.0);
}

}  // namespace

TEST_CASE("normalize_roi scales to percent of the subject's first-Rest-session reference") {
  const FeatureTable table = synthetic_profile_table(3, 2, 4, 5, {}, 0.0, 3);
  const ParameterCouple couple = table.couples().front();
  const RoiActivations act = roi_activations(table, couple);
  const RoiActivations norm = normalize_roi(act);

  for (int i = 0; i < 3; ++i) {
    // reference = max over ROIs of the first Rest session
    double ref = -1e18;
    for (int r = 0; r < 5; ++r) ref = std::max(ref, act.at(i, 0, Condition::Rest, r));
    for (int r = 0; r < 5; ++r) {
      CHECK(norm.at(i, 0, Condition::Rest, r) ==
            doctest::Approx(act.at(i, 0, Condition::Rest, r) / ref * 100.0).epsilon(1e-12));
    }
    // the reference cell itself normalizes to 100, half of it to 50
    int argmax = 0;
    for (int r = 1; r < 5; ++r) {
      if (act.at(i, 0, Condition::Rest, r) > act.at(i, 0, Condition::Rest, argmax)) argmax = r;
    }
    CHECK(norm.at(i, 0, Condition::Rest, argmax) == doctest::Approx(100.0).epsilon(1e-12));

    // argmax per (session, condition) is invariant under the scaling
    for (int s = 0; s < 2; ++s) {
      for (Condition cond : {Condition::Rest, Condition::MI}) {
        int raw_argmax = 0, norm_argmax = 0;
        for (int r = 1; r < 5; ++r) {
          if (act.at(i, s, cond, r) > act.at(i, s, cond, raw_argmax)) raw_argmax = r;
          if (norm.at(i, s, cond, r) > norm.at(i, s, cond, norm_argmax)) norm_argmax = r;
        }
        CHECK(raw_argmax == norm_argmax);
      }
    }
  }
}

TEST_CASE("t_maps: identical profiles give zero maps; label swap negates") {
  // zero-shift table: MI and Rest distributions identical in expectation, so
  // force exact equality by constructing matching trials
  const ParameterCouple couple = make_couple(2, 2, 250.0);
  std::vector<FeatureRow> rows;
  auto rng = make_rng(5);
  for (Condition cond : {Condition::Rest, Condition::MI}) {
    auto trial_rng = make_rng(55);  // same stream for both conditions
    for (int trial = 0; trial < 5; ++trial) {
      FeatureRow row;
      row.key = {"S0", "1", cond, trial, couple};
      row.features.n_avalanches = 1;
      row.features.mean_avalanche_length = 3.0;
      row.features.weighted_mean_activations = 2.0;
      row.features.roi_profile = {gauss(trial_rng), gauss(trial_rng)};
      rows.push_back(std::move(row));
    }
  }
  (void)rng;
  FeatureTable table({couple}, rows, {"S0"}, {"1"}, 2, 250.0);
  const auto maps = t_maps(table, couple);
  REQUIRE(maps.size() == 1);
  REQUIRE(!maps[0].missing);
  for (double t : maps[0].t) CHECK(t == doctest::Approx(0.0));

  // swapped labels negate the map
  const FeatureTable shifted = synthetic_profile_table(2, 1, 6, 3, {1}, 2.0, 9);
  auto swapped_rows = shifted.rows();
  for (auto& row : swapped_rows) {
    row.key.condition = row.key.condition == Condition::MI ? Condition::Rest : Condition::MI;
  }
  const FeatureTable swapped(shifted.couples(), swapped_rows, shifted.subjects(),
                             shifted.sessions(), shifted.n_rois(), 250.0);
  const auto base_maps = t_maps(shifted, shifted.couples().front());
  const auto swap_maps = t_maps(swapped, shifted.couples().front());
  for (std::size_t m = 0; m < base_maps.size(); ++m) {
    for (std::size_t r = 0; r < base_maps[m].t.size(); ++r) {
      CHECK(base_maps[m].t[r] == doctest::Approx(-swap_maps[m].t[r]).epsilon(1e-9));
    }
  }
}

TEST_CASE("t_maps marks cells with too few trials and records truncation") {
  const ParameterCouple couple = make_couple(2, 2, 250.0);
  std::vector<FeatureRow> rows;
  auto rng = make_rng(6);
  auto add = [&](Condition cond, int trial) {
    FeatureRow row;
    row.key = {"S0", "1", cond, trial, couple};
    row.features.n_avalanches = 1;
    row.features.mean_avalanche_length = 3.0;
    row.features.weighted_mean_activations = 2.0;
    row.features.roi_profile = {gauss(rng)};
    rows.push_back(std::move(row));
  };
  add(Condition::Rest, 0);
  add(Condition::MI, 0);
  FeatureTable thin({couple}, rows, {"S0"}, {"1"}, 1, 250.0);
  const auto maps = t_maps(thin, couple);
  REQUIRE(maps.size() == 1);
  CHECK(maps[0].missing);
  CHECK(maps[0].note.find("fewer than 2") != std::string::npos);

  // unequal counts: 4 vs 3 pairs -> truncation note
  rows.clear();
  for (int t = 0; t < 4; ++t) add(Condition::Rest, t);
  for (int t = 0; t < 3; ++t) add(Condition::MI, t);
  FeatureTable uneven({couple}, rows, {"S0"}, {"1"}, 1, 250.0);
  const auto umaps = t_maps(uneven, couple);
  REQUIRE(umaps.size() == 1);
  CHECK(!umaps[0].missing);
  CHECK(umaps[0].note.find("truncated to 3") != std::string::npos);
}

TEST_CASE("select_rois recovers planted ROIs and returns nothing at alpha = 0") {
  const std::vector<int> planted{1, 4, 7};
  int recovered_all = 0;
  const int runs = 10;
  for (int run = 0; run < runs; ++run) {
    const FeatureTable table =
        synthetic_profile_table(8, 3, 10, 12, planted, 1.8, 100 + static_cast<std::uint64_t>(run));
    const auto maps = t_maps(table, table.couples().front());
    const RoiSelection sel = select_rois(maps, table.couples().front(), 0.05, 12);
    bool all = true;
    for (int r : planted) {
      all = all && std::find(sel.selected.begin(), sel.selected.end(), r) != sel.selected.end();
    }
    recovered_all += all ? 1 : 0;

    const RoiSelection none = select_rois(maps, table.couples().front(), 0.0, 12);
    CHECK(none.selected.empty());
  }
  CHECK(recovered_all >= 9);
}

TEST_CASE("null tables produce roughly alpha-level false positives") {
  int total_selected = 0;
  const int runs = 10, n_rois = 20;
  for (int run = 0; run < runs; ++run) {
    const FeatureTable table =
        synthetic_profile_table(8, 3, 10, n_rois, {}, 0.0, 900 + static_cast<std::uint64_t>(run));
    const auto maps = t_maps(table, table.couples().front());
    const RoiSelection sel = select_rois(maps, table.couples().front(), 0.05, n_rois);
    total_selected += static_cast<int>(sel.selected.size());
  }
  // min(p_session, p_grandmean) < alpha has null rate <= 1-(1-a)^2 ~ 0.0975;
  // allow generous slack on 200 Bernoulli draws
  CHECK(total_selected <= 40);
}

TEST_CASE("restrict_and_recompute equals analysis of a physically truncated dataset") {
  SynthConfig config;
  config.n_subjects = 2;
  config.n_sessions = 2;
  config.trials_per_cell = 3;
  config.n_rois = 6;
  config.n_samples = 120;
  config.mi_sigma_learner = {0.4, 0.6};
  config.event_rate = 0.02;
  config.seed = 31;
  const SynthResult result = generate(config);
  const std::vector<ParameterCouple> couples{make_couple(2, 2, 250.0), make_couple(3, 2, 250.0)};

  RoiSelection selection;
  selection.couple = couples.front();
  selection.selected = {1, 3, 4};

  const DatasetView view = filter_trials(result.dataset, TrialFilter::All);
  const FeatureTable restricted = restrict_and_recompute(view, selection, couples);

  // physically truncated copy of the dataset
  DatasetManifest manifest = result.dataset.manifest();
  manifest.n_rois = 3;
  manifest.roi_names = {"roi_1", "roi_3", "roi_4"};
  std::vector<TrialRef> refs = result.dataset.trials();
  std::vector<TrialRecording> recs;
  for (const auto& ref : refs) {
    TrialRecording rec = result.dataset.trial(ref);
    Eigen::MatrixXd cut(3, rec.data.cols());
    cut.row(0) = rec.data.row(1);
    cut.row(1) = rec.data.row(3);
    cut.row(2) = rec.data.row(4);
    rec.data = std::move(cut);
    recs.push_back(std::move(rec));
  }
  const Dataset truncated = Dataset::from_memory(std::move(manifest), std::move(refs), std::move(recs));
  const FeatureTable direct = compute_feature_table(truncated, couples);

  REQUIRE(restricted.rows().size() == direct.rows().size());
  for (std::size_t i = 0; i < restricted.rows().size(); ++i) {
    const auto& a = restricted.rows()[i].features;
    const auto& b = direct.rows()[i].features;
    CHECK(a.n_avalanches == b.n_avalanches);
    REQUIRE(a.mean_avalanche_length.has_value() == b.mean_avalanche_length.has_value());
    if (a.mean_avalanche_length) {
      CHECK(*a.mean_avalanche_length == *b.mean_avalanche_length);
      CHECK(*a.weighted_mean_activations == *b.weighted_mean_activations);
      CHECK(a.roi_profile == b.roi_profile);
    }
  }

  // full selection reproduces the unrestricted table
  RoiSelection all;
  all.couple = couples.front();
  all.selected = {0, 1, 2, 3, 4, 5};
  const FeatureTable same = restrict_and_recompute(view, all, couples);
  const FeatureTable original = compute_feature_table(result.dataset, couples);
  REQUIRE(same.rows().size() == original.rows().size());
  for (std::size_t i = 0; i < same.rows().size(); ++i) {
    CHECK(same.rows()[i].features.n_avalanches == original.rows()[i].features.n_avalanches);
  }

  RoiSelection empty;
  empty.couple = couples.front();
  CHECK_THROWS_WITH_AS(restrict_and_recompute(view, empty, couples),
                       doctest::Contains("no ROIs selected"), ValidationError);
}

TEST_CASE("restricting to a subset never increases total activation") {
  SynthConfig config;
  config.n_subjects = 1;
  config.n_sessions = 2;
  config.trials_per_cell = 4;
  config.n_rois = 6;
  config.n_samples = 150;
  config.mi_sigma_learner = {0.5, 0.7};
  config.event_rate = 0.02;
  config.seed = 77;
  const SynthResult result = generate(config);
  const std::vector<ParameterCouple> couples{make_couple(2, 2, 250.0)};

  const FeatureTable full = compute_feature_table(result.dataset, couples);
  FeatureOptions options;
  options.roi_subset = {0, 2, 5};
  const FeatureTable sub = compute_feature_table(result.dataset, couples, options);

  double full_total = 0.0, sub_total = 0.0;
  for (const auto& row : full.rows()) {
    if (row.features.weighted_mean_activations) {
      full_total += *row.features.weighted_mean_activations * row.features.n_avalanches;
    }
  }
  for (const auto& row : sub.rows()) {
    if (row.features.weighted_mean_activations) {
      sub_total += *row.features.weighted_mean_activations * row.features.n_avalanches;
    }
  }
  CHECK(sub_total <= full_total + 1e-9);
}
