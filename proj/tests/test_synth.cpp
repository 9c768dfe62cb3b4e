#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "avbci/avalanche.hpp"
#include "avbci/synth.hpp"

using namespace avbci;

namespace {

SynthConfig small_config() {
  SynthConfig c;
  c.n_subjects = 4;
  c.n_sessions = 2;
  c.trials_per_cell = 3;
  c.n_rois = 5;
  c.n_samples = 80;
  c.mi_sigma_learner = {0.4, 0.7};
  c.event_rate = 0.01;
  c.seed = 11;
  return c;
}

}  // namespace

TEST_CASE("config validation") {
  SynthConfig c = small_config();
  c.learner_fraction = 1.5;
  CHECK_THROWS_AS(validate_config(c), ValidationError);
  c = small_config();
  c.rest_sigma = 1.5;
  CHECK_THROWS_AS(validate_config(c), ValidationError);
  c = small_config();
  c.mi_sigma_learner = {0.7, 0.4};  // not increasing
  CHECK_THROWS_AS(validate_config(c), ValidationError);
  c = small_config();
  c.mi_sigma_learner = {0.4};  // wrong length
  CHECK_THROWS_AS(validate_config(c), ValidationError);
  CHECK_NOTHROW(validate_config(small_config()));

  CHECK_THROWS_AS(synth_config_from_json("{\"learner_fraction\": 1.5}"), ValidationError);
  CHECK_THROWS_AS(synth_config_from_json("not json"), ValidationError);
  const SynthConfig defaults = synth_config_from_json("{}");
  CHECK(defaults.n_subjects == 20);
  CHECK(defaults.n_sessions == 4);
}

TEST_CASE("fixed seed gives a byte-identical dataset") {
  const SynthConfig config = small_config();
  const SynthResult a = generate(config);
  const SynthResult b = generate(config);
  REQUIRE(a.dataset.trials().size() == b.dataset.trials().size());
  for (std::size_t i = 0; i < a.dataset.trials().size(); ++i) {
    CHECK(a.dataset.trial(a.dataset.trials()[i]).data == b.dataset.trial(b.dataset.trials()[i]).data);
  }
  CHECK(a.dataset.manifest().scores == b.dataset.manifest().scores);
  CHECK(a.truth.learners == b.truth.learners);

  SynthConfig other = config;
  other.seed = 12;
  const SynthResult c = generate(other);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.dataset.trials().size() && !any_diff; ++i) {
    any_diff = a.dataset.trial(a.dataset.trials()[i]).data != c.dataset.trial(c.dataset.trials()[i]).data;
  }
  CHECK(any_diff);
}

TEST_CASE("higher branching gives longer detected avalanches") {
  SynthConfig config = small_config();
  config.n_rois = 8;
  config.n_samples = 300;
  // two sigma levels probed through the expectation oracle (50+ trials each)
  SynthConfig low = config;
  low.rest_sigma = 0.3;
  SynthConfig high = config;
  high.rest_sigma = 0.9;
  const ExpectedStats weak = expected_statistics(low, Condition::Rest, 0, false, 2, 60);
  const ExpectedStats strong = expected_statistics(high, Condition::Rest, 0, false, 2, 60);
  REQUIRE(weak.n_trials > 0);
  REQUIRE(strong.n_trials > 0);
  CHECK(strong.mean_length > weak.mean_length);
}

TEST_CASE("single-site process without branching has near-unit avalanche length") {
  SynthConfig config = small_config();
  config.n_rois = 1;
  config.n_samples = 4000;
  config.event_rate = 0.002;
  config.rest_sigma = 1e-9;  // effectively no branching
  const ExpectedStats stats = expected_statistics(config, Condition::Rest, 0, false, 1, 40);
  REQUIRE(stats.n_trials > 0);
  CHECK(stats.mean_length == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("expectation estimates are stable when the trial budget doubles") {
  SynthConfig config = small_config();
  config.n_rois = 8;
  config.n_samples = 200;
  const ExpectedStats a = expected_statistics(config, Condition::MI, 1, true, 2, 100);
  const ExpectedStats b = expected_statistics(config, Condition::MI, 1, true, 2, 200);
  CHECK(std::fabs(a.mean_length - b.mean_length) < 2.0 * (a.standard_error + b.standard_error));
}

TEST_CASE("ground truth: learner MI expectations increase, Rest flat, scores calibrated") {
  SynthConfig config = small_config();
  config.n_subjects = 8;
  config.n_sessions = 3;
  config.mi_sigma_learner = {0.35, 0.55, 0.75};
  config.rest_sigma = 0.55;
  config.mi_sigma_nonlearner = 0.5;
  const SynthResult result = generate(config);
  const GroundTruth& t = result.truth;

  for (int s = 1; s < config.n_sessions; ++s) {
    CHECK(t.expected_length_mi_learner[static_cast<std::size_t>(s)] >
          t.expected_length_mi_learner[static_cast<std::size_t>(s - 1)]);
    CHECK(t.expected_length_rest[static_cast<std::size_t>(s)] ==
          t.expected_length_rest[static_cast<std::size_t>(s - 1)]);
  }
  // learners end with the most negative planted delta
  CHECK(t.planted_delta_learner.back() < t.planted_delta_nonlearner.back());

  int learners = 0;
  for (const auto& [subject, flag] : t.learners) learners += flag ? 1 : 0;
  CHECK(learners == 4);

  for (const auto& [subject, sessions] : t.scores) {
    for (const auto& [session, score] : sessions) {
      CHECK(score >= 0.0);
      CHECK(score <= 100.0);
    }
  }
}

TEST_CASE("noise-free pipeline matches the event-process expectation within 10%") {
  SynthConfig config;
  config.n_subjects = 2;
  config.n_sessions = 2;
  config.trials_per_cell = 30;
  config.n_rois = 10;
  config.n_samples = 400;
  config.mi_sigma_learner = {0.4, 0.6};
  config.rest_sigma = 0.6;
  config.event_rate = 0.005;
  config.noise_sd = 0.0;
  config.kernel = {1.0};
  config.score_noise = 0.0;
  config.learner_fraction = 0.0;  // all subjects share the Rest/nonlearner dynamics
  config.seed = 21;

  const SynthResult result = generate(config);
  const auto couples = std::vector<ParameterCouple>{make_couple(3, 2, 250.0)};
  const FeatureTable table = compute_feature_table(result.dataset, couples);

  double detected_sum = 0.0;
  int detected_n = 0;
  for (const auto& subject : table.subjects()) {
    for (const auto& session : table.sessions()) {
      const CellAggregate* cell = table.cell(subject, session, Condition::Rest, couples[0]);
      REQUIRE(cell != nullptr);
      REQUIRE(cell->mean_length.has_value());
      detected_sum += *cell->mean_length;
      ++detected_n;
    }
  }
  const double detected = detected_sum / detected_n;
  const double expected = result.truth.expected_length_rest[0];
  CHECK(std::fabs(detected - expected) / expected < 0.10);
}
