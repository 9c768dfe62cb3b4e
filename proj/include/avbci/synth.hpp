#ifndef AVBCI_SYNTH_HPP
#define AVBCI_SYNTH_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "avbci/dataio.hpp"

namespace avbci {

/// Controls for the cascade generator. Learner subjects get the per-session
/// MI branching values; everyone shares the Rest value, which is constant
/// across sessions.
struct SynthConfig {
  int n_subjects = 20;
  int n_sessions = 4;
  int trials_per_cell = 20;  // per (subject, session, condition)
  int n_rois = 68;
  int n_samples = 500;
  double sampling_rate_hz = 250.0;
  double learner_fraction = 0.5;
  double event_rate = 0.002;  // spontaneous activation probability per ROI per sample
  double noise_sd = 0.10;
  std::vector<double> kernel{1.0, 0.3};  // event-to-signal convolution kernel
  double rest_sigma = 0.60;
  std::vector<double> mi_sigma_learner{0.40, 0.55, 0.70, 0.85};  // one per session, increasing
  double mi_sigma_nonlearner = 0.55;
  int branch_fanout = 4;  // neighbors contacted by an active ROI
  double score_noise = 1.0;
  double miss_rate = 0.0;  // > 0 emits Hit/Miss labels with this Miss probability
  std::vector<int> focal_rois;  // condition-sensitive ROIs (extra MI seeding)
  double focal_boost = 3.0;     // MI seed-rate multiplier on focal ROIs
  std::uint64_t seed = 12345;
};

void validate_config(const SynthConfig& config);
SynthConfig synth_config_from_json(const std::string& json_text);
std::string synth_config_to_json(const SynthConfig& config);

/// Branching parameter for one cell of the design.
double branching_sigma(const SynthConfig& config, Condition condition, int session_index,
                       bool learner);

struct GroundTruth {
  std::map<std::string, bool> learners;
  /// Expected mean avalanche length of the raw event raster (min duration 2),
  /// estimated by Monte Carlo during generation.
  std::vector<double> expected_length_rest;          // per session
  std::vector<double> expected_length_mi_learner;    // per session
  std::vector<double> expected_length_mi_nonlearner; // per session
  /// Planted delta (Rest - MI) per class and session, derived from the above.
  std::vector<double> planted_delta_learner;
  std::vector<double> planted_delta_nonlearner;
  std::map<std::string, std::map<std::string, double>> scores;
  /// Realized Miss counts per (subject, session, condition); empty when
  /// labels were not generated.
  std::map<std::string, std::map<std::string, std::map<std::string, int>>> miss_counts;
  std::uint64_t seed = 0;
};

struct SynthResult {
  Dataset dataset;
  GroundTruth truth;
};

/// Generates the dataset in memory (deterministic given the seed; thread
/// count does not affect the output).
SynthResult generate(const SynthConfig& config);

/// Generates and writes the dataio layout plus ground_truth.json.
SynthResult generate_to_dir(const SynthConfig& config, const std::string& out_dir);

struct ExpectedStats {
  double mean_length = 0.0;
  double standard_error = 0.0;
  int n_trials = 0;
  int n_avalanches = 0;
};

/// Monte Carlo estimate of the mean avalanche length of the binary event
/// process (no kernel, no noise) for one cell's parameters.
ExpectedStats expected_statistics(const SynthConfig& config, Condition condition,
                                  int session_index, bool learner, int min_duration_samples,
                                  int n_mc_trials, std::uint64_t seed_salt = 0x5eed);

void write_ground_truth(const GroundTruth& truth, const std::string& path);

}  // namespace avbci

#endif
