#include "avbci/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "avbci/avalanche.hpp"
#include "avbci/rng.hpp"
#include "parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace avbci {

namespace {

// Reparse through the 9-significant-digit decimal form so written CSVs load
// back bit-identical to the in-memory dataset.
double quantize9(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.9g", v);
  double out = v;
  std::from_chars(buf, buf + n, out);
  return out;
}

double gaussian(std::mt19937_64& rng) {
  // Box-Muller on explicitly drawn bits; keeps output independent of the
  // standard library's normal_distribution internals.
  double u1 = uniform_real(rng);
  while (u1 <= 0.0) u1 = uniform_real(rng);
  const double u2 = uniform_real(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace

void validate_config(const SynthConfig& c) {
  if (c.n_subjects < 1 || c.n_sessions < 1 || c.trials_per_cell < 1 || c.n_rois < 1 ||
      c.n_samples < 1) {
    throw ValidationError("synth: counts must be positive");
  }
  if (!(c.sampling_rate_hz > 0)) throw ValidationError("synth: sampling rate must be > 0");
  if (!(c.learner_fraction >= 0.0 && c.learner_fraction <= 1.0)) {
    throw ValidationError("synth: learner_fraction must be in [0, 1]");
  }
  if (!(c.event_rate >= 0.0 && c.event_rate <= 1.0)) {
    throw ValidationError("synth: event_rate must be in [0, 1]");
  }
  if (c.noise_sd < 0) throw ValidationError("synth: noise_sd must be >= 0");
  if (c.kernel.empty()) throw ValidationError("synth: kernel must be nonempty");
  auto check_sigma = [](double s, const char* name) {
    if (!(s > 0.0 && s <= 1.2)) {
      throw ValidationError(std::string("synth: ") + name + " must be in (0, 1.2]");
    }
  };
  check_sigma(c.rest_sigma, "rest_sigma");
  check_sigma(c.mi_sigma_nonlearner, "mi_sigma_nonlearner");
  if (static_cast<int>(c.mi_sigma_learner.size()) != c.n_sessions) {
    throw ValidationError("synth: mi_sigma_learner needs one value per session");
  }
  for (std::size_t i = 0; i < c.mi_sigma_learner.size(); ++i) {
    check_sigma(c.mi_sigma_learner[i], "mi_sigma_learner");
    if (i > 0 && !(c.mi_sigma_learner[i] > c.mi_sigma_learner[i - 1])) {
      throw ValidationError("synth: mi_sigma_learner must be strictly increasing across sessions");
    }
  }
  if (c.branch_fanout < 1) throw ValidationError("synth: branch_fanout must be >= 1");
  if (c.score_noise < 0) throw ValidationError("synth: score_noise must be >= 0");
  if (!(c.miss_rate >= 0.0 && c.miss_rate <= 1.0)) {
    throw ValidationError("synth: miss_rate must be in [0, 1]");
  }
  for (int r : c.focal_rois) {
    if (r < 0 || r >= c.n_rois) throw ValidationError("synth: focal ROI index out of range");
  }
  if (c.focal_boost < 1.0) throw ValidationError("synth: focal_boost must be >= 1");
}

SynthConfig synth_config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("synth config: invalid JSON: ") + e.what());
  }
  SynthConfig c;
  auto get = [&](const char* key, auto& field) {
    if (auto it = j.find(key); it != j.end()) field = it->get<std::decay_t<decltype(field)>>();
  };
  get("n_subjects", c.n_subjects);
  get("n_sessions", c.n_sessions);
  get("trials_per_cell", c.trials_per_cell);
  get("n_rois", c.n_rois);
  get("n_samples", c.n_samples);
  get("sampling_rate_hz", c.sampling_rate_hz);
  get("learner_fraction", c.learner_fraction);
  get("event_rate", c.event_rate);
  get("noise_sd", c.noise_sd);
  get("kernel", c.kernel);
  get("rest_sigma", c.rest_sigma);
  get("mi_sigma_learner", c.mi_sigma_learner);
  get("mi_sigma_nonlearner", c.mi_sigma_nonlearner);
  get("branch_fanout", c.branch_fanout);
  get("score_noise", c.score_noise);
  get("miss_rate", c.miss_rate);
  get("focal_rois", c.focal_rois);
  get("focal_boost", c.focal_boost);
  get("seed", c.seed);
  if (c.mi_sigma_learner.size() != static_cast<std::size_t>(c.n_sessions) &&
      c.mi_sigma_learner.size() == 4 && j.find("mi_sigma_learner") == j.end()) {
    // default trajectory resized for non-default session counts
    c.mi_sigma_learner.resize(static_cast<std::size_t>(c.n_sessions));
    for (int s = 0; s < c.n_sessions; ++s) {
      c.mi_sigma_learner[static_cast<std::size_t>(s)] =
          0.40 + 0.45 * (c.n_sessions == 1 ? 0.0 : static_cast<double>(s) / (c.n_sessions - 1));
    }
  }
  validate_config(c);
  return c;
}

std::string synth_config_to_json(const SynthConfig& c) {
  json j;
  j["n_subjects"] = c.n_subjects;
  j["n_sessions"] = c.n_sessions;
  j["trials_per_cell"] = c.trials_per_cell;
  j["n_rois"] = c.n_rois;
  j["n_samples"] = c.n_samples;
  j["sampling_rate_hz"] = c.sampling_rate_hz;
  j["learner_fraction"] = c.learner_fraction;
  j["event_rate"] = c.event_rate;
  j["noise_sd"] = c.noise_sd;
  j["kernel"] = c.kernel;
  j["rest_sigma"] = c.rest_sigma;
  j["mi_sigma_learner"] = c.mi_sigma_learner;
  j["mi_sigma_nonlearner"] = c.mi_sigma_nonlearner;
  j["branch_fanout"] = c.branch_fanout;
  j["score_noise"] = c.score_noise;
  j["miss_rate"] = c.miss_rate;
  j["focal_rois"] = c.focal_rois;
  j["focal_boost"] = c.focal_boost;
  j["seed"] = c.seed;
  return j.dump(2);
}

double branching_sigma(const SynthConfig& config, Condition condition, int session_index,
                       bool learner) {
  if (session_index < 0 || session_index >= config.n_sessions) {
    throw ValidationError("synth: session index out of range");
  }
  if (condition == Condition::Rest) return config.rest_sigma;
  return learner ? config.mi_sigma_learner[static_cast<std::size_t>(session_index)]
                 : config.mi_sigma_nonlearner;
}

namespace {

// One trial of the discrete cascade: spontaneous seeds plus branching from
// the previous step's active set.
BinaryMatrix simulate_events(const SynthConfig& c, double sigma, bool mi_condition,
                             std::mt19937_64& rng) {
  BinaryMatrix events(c.n_rois, c.n_samples);
  events.setZero();
  std::vector<int> active, next;
  std::vector<double> seed_rate(static_cast<std::size_t>(c.n_rois), c.event_rate);
  if (mi_condition) {
    for (int r : c.focal_rois) {
      seed_rate[static_cast<std::size_t>(r)] = std::min(1.0, c.event_rate * c.focal_boost);
    }
  }
  const double branch_p = sigma / static_cast<double>(c.branch_fanout);
  for (int t = 0; t < c.n_samples; ++t) {
    next.clear();
    for (int r = 0; r < c.n_rois; ++r) {
      if (uniform_real(rng) < seed_rate[static_cast<std::size_t>(r)]) next.push_back(r);
    }
    for (int src : active) {
      (void)src;
      for (int m = 0; m < c.branch_fanout; ++m) {
        const int target = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(c.n_rois)));
        if (uniform_real(rng) < branch_p) next.push_back(target);
      }
    }
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    for (int r : next) events(r, t) = 1;
    active = next;
  }
  return events;
}

Eigen::MatrixXd events_to_signal(const SynthConfig& c, const BinaryMatrix& events,
                                 std::mt19937_64& rng) {
  Eigen::MatrixXd signal(c.n_rois, c.n_samples);
  for (int r = 0; r < c.n_rois; ++r) {
    for (int t = 0; t < c.n_samples; ++t) {
      double v = c.noise_sd > 0 ? c.noise_sd * gaussian(rng) : 0.0;
      for (std::size_t k = 0; k < c.kernel.size(); ++k) {
        const int src = t - static_cast<int>(k);
        if (src >= 0 && events(r, src)) v += c.kernel[k];
      }
      signal(r, t) = quantize9(v);
    }
  }
  return signal;
}

std::string subject_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "S%02d", i + 1);
  return buf;
}

double mean_detected_length(const BinaryMatrix& events, int min_duration, long& n_avalanches) {
  const auto segments = detect_avalanches(events, min_duration);
  n_avalanches += static_cast<long>(segments.size());
  if (segments.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (const auto& seg : segments) s += seg.length();
  return s / static_cast<double>(segments.size());
}

}  // namespace

ExpectedStats expected_statistics(const SynthConfig& config, Condition condition,
                                  int session_index, bool learner, int min_duration_samples,
                                  int n_mc_trials, std::uint64_t seed_salt) {
  validate_config(config);
  if (n_mc_trials < 2) throw ValidationError("expected_statistics: needs >= 2 trials");
  const double sigma = branching_sigma(config, condition, session_index, learner);

  std::vector<double> means(static_cast<std::size_t>(n_mc_trials),
                            std::numeric_limits<double>::quiet_NaN());
  std::vector<long> counts(static_cast<std::size_t>(n_mc_trials), 0);
  parallel_for(static_cast<std::size_t>(n_mc_trials), [&](std::size_t i) {
    auto rng = make_rng(derive_seed(config.seed ^ seed_salt, i));
    const BinaryMatrix events = simulate_events(config, sigma, condition == Condition::MI, rng);
    means[i] = mean_detected_length(events, min_duration_samples, counts[i]);
  });

  double sum = 0.0;
  int n = 0;
  long total_avalanches = 0;
  for (std::size_t i = 0; i < means.size(); ++i) {
    total_avalanches += counts[i];
    if (std::isfinite(means[i])) {
      sum += means[i];
      ++n;
    }
  }
  ExpectedStats stats;
  stats.n_trials = n;
  stats.n_avalanches = static_cast<int>(std::min<long>(total_avalanches, INT32_MAX));
  if (n == 0) return stats;
  stats.mean_length = sum / n;
  double var = 0.0;
  for (double m : means) {
    if (std::isfinite(m)) var += (m - stats.mean_length) * (m - stats.mean_length);
  }
  if (n > 1) stats.standard_error = std::sqrt(var / (n - 1) / n);
  return stats;
}

namespace {

// Midrank-normalize the planted per-cell deltas to [-1, 1]; tied cells share
// one value, which keeps equal-delta cells at the same base score.
std::vector<double> rank_normalize(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> out(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    const double rn = n == 1 ? 0.0 : (midrank - (static_cast<double>(n) + 1.0) / 2.0) /
                                         ((static_cast<double>(n) - 1.0) / 2.0);
    for (std::size_t k = i; k <= j; ++k) out[order[k]] = rn;
    i = j + 1;
  }
  return out;
}

}  // namespace

SynthResult generate(const SynthConfig& config) {
  validate_config(config);

  GroundTruth truth;
  truth.seed = config.seed;

  // Learner assignment: the first round(n * fraction) subjects, then a seeded
  // shuffle so learner-ness is not confounded with subject order.
  const int n_learners =
      static_cast<int>(std::lround(config.learner_fraction * config.n_subjects));
  std::vector<bool> learner_flags(static_cast<std::size_t>(config.n_subjects), false);
  for (int i = 0; i < n_learners; ++i) learner_flags[static_cast<std::size_t>(i)] = true;
  {
    auto rng = make_rng(derive_seed(config.seed, 0xa551f));
    fisher_yates(learner_flags, rng);
  }

  DatasetManifest manifest;
  manifest.n_rois = config.n_rois;
  manifest.sampling_rate_hz = config.sampling_rate_hz;
  manifest.conditions = {Condition::Rest, Condition::MI};
  for (int i = 0; i < config.n_subjects; ++i) {
    manifest.subjects.push_back(subject_id(i));
    truth.learners[manifest.subjects.back()] = learner_flags[static_cast<std::size_t>(i)];
  }
  for (int s = 0; s < config.n_sessions; ++s) manifest.sessions.push_back(std::to_string(s + 1));
  for (int r = 0; r < config.n_rois; ++r) manifest.roi_names.push_back("roi_" + std::to_string(r));
  manifest.has_labels = config.miss_rate > 0.0;

  // Planted expectations for the raw event raster (reference duration 2).
  const int mc_trials = 200;
  truth.expected_length_rest.resize(static_cast<std::size_t>(config.n_sessions));
  truth.expected_length_mi_learner.resize(static_cast<std::size_t>(config.n_sessions));
  truth.expected_length_mi_nonlearner.resize(static_cast<std::size_t>(config.n_sessions));
  for (int s = 0; s < config.n_sessions; ++s) {
    truth.expected_length_rest[static_cast<std::size_t>(s)] =
        expected_statistics(config, Condition::Rest, s, false, 2, mc_trials).mean_length;
    truth.expected_length_mi_learner[static_cast<std::size_t>(s)] =
        expected_statistics(config, Condition::MI, s, true, 2, mc_trials).mean_length;
    truth.expected_length_mi_nonlearner[static_cast<std::size_t>(s)] =
        expected_statistics(config, Condition::MI, s, false, 2, mc_trials).mean_length;
  }
  for (int s = 0; s < config.n_sessions; ++s) {
    if (!std::isfinite(truth.expected_length_rest[static_cast<std::size_t>(s)]) ||
        !std::isfinite(truth.expected_length_mi_learner[static_cast<std::size_t>(s)]) ||
        !std::isfinite(truth.expected_length_mi_nonlearner[static_cast<std::size_t>(s)])) {
      throw NumericError("synth: a cell produced no avalanches; raise event_rate or n_samples");
    }
  }
  truth.planted_delta_learner.resize(static_cast<std::size_t>(config.n_sessions));
  truth.planted_delta_nonlearner.resize(static_cast<std::size_t>(config.n_sessions));
  for (int s = 0; s < config.n_sessions; ++s) {
    truth.planted_delta_learner[static_cast<std::size_t>(s)] =
        truth.expected_length_rest[static_cast<std::size_t>(s)] -
        truth.expected_length_mi_learner[static_cast<std::size_t>(s)];
    truth.planted_delta_nonlearner[static_cast<std::size_t>(s)] =
        truth.expected_length_rest[static_cast<std::size_t>(s)] -
        truth.expected_length_mi_nonlearner[static_cast<std::size_t>(s)];
  }

  // Scores: 50 + 40 * rank-normalized planted delta + noise, clipped.
  std::vector<double> planted_cells;
  for (int i = 0; i < config.n_subjects; ++i) {
    for (int s = 0; s < config.n_sessions; ++s) {
      planted_cells.push_back(learner_flags[static_cast<std::size_t>(i)]
                                  ? truth.planted_delta_learner[static_cast<std::size_t>(s)]
                                  : truth.planted_delta_nonlearner[static_cast<std::size_t>(s)]);
    }
  }
  const std::vector<double> rn = rank_normalize(planted_cells);
  {
    auto rng = make_rng(derive_seed(config.seed, 0x5c02e));
    std::size_t cell = 0;
    for (int i = 0; i < config.n_subjects; ++i) {
      for (int s = 0; s < config.n_sessions; ++s, ++cell) {
        double score = 50.0 + 40.0 * rn[cell];
        if (config.score_noise > 0) score += config.score_noise * gaussian(rng);
        score = std::clamp(score, 0.0, 100.0);
        manifest.scores[manifest.subjects[static_cast<std::size_t>(i)]]
                       [manifest.sessions[static_cast<std::size_t>(s)]] = quantize9(score);
      }
    }
  }
  truth.scores = manifest.scores;

  // Trial synthesis, parallel over trials with per-trial seeds.
  struct TrialSlot {
    int subject, session;
    Condition condition;
    int trial;
  };
  std::vector<TrialSlot> slots;
  for (int i = 0; i < config.n_subjects; ++i) {
    for (int s = 0; s < config.n_sessions; ++s) {
      for (Condition cond : manifest.conditions) {
        for (int t = 0; t < config.trials_per_cell; ++t) slots.push_back({i, s, cond, t});
      }
    }
  }

  std::vector<TrialRef> refs(slots.size());
  std::vector<TrialRecording> recordings(slots.size());
  parallel_for(slots.size(), [&](std::size_t idx) {
    const TrialSlot& slot = slots[idx];
    const std::string& subject = manifest.subjects[static_cast<std::size_t>(slot.subject)];
    const std::string& session = manifest.sessions[static_cast<std::size_t>(slot.session)];
    const bool learner = learner_flags[static_cast<std::size_t>(slot.subject)];
    const double sigma = branching_sigma(config, slot.condition, slot.session, learner);

    auto rng = make_rng(derive_seed(config.seed, idx));
    const BinaryMatrix events =
        simulate_events(config, sigma, slot.condition == Condition::MI, rng);

    TrialRecording rec;
    rec.data = events_to_signal(config, events, rng);
    rec.subject = subject;
    rec.session = session;
    rec.condition = slot.condition;
    rec.trial_id = slot.trial;
    rec.sampling_rate_hz = config.sampling_rate_hz;

    TrialRef ref;
    ref.subject = subject;
    ref.session = session;
    ref.condition = slot.condition;
    ref.trial_index = slot.trial;
    char name[64];
    std::snprintf(name, sizeof name, "trials/%s/%s/%s/trial_%03d.csv", subject.c_str(),
                  session.c_str(), to_string(slot.condition), slot.trial);
    ref.path = name;
    if (manifest.has_labels) {
      auto label_rng = make_rng(derive_seed(config.seed, 0xd1ce000000ULL + idx));
      ref.label = uniform_real(label_rng) < config.miss_rate ? TrialLabel::Miss : TrialLabel::Hit;
    }
    refs[idx] = std::move(ref);
    recordings[idx] = std::move(rec);
  });

  if (manifest.has_labels) {
    for (const auto& ref : refs) {
      if (ref.label == TrialLabel::Miss) {
        ++truth.miss_counts[ref.subject][ref.session][to_string(ref.condition)];
      } else {
        truth.miss_counts[ref.subject][ref.session];  // ensure subject/session keys exist
      }
    }
  }

  SynthResult result;
  result.truth = std::move(truth);
  result.dataset = Dataset::from_memory(std::move(manifest), std::move(refs), std::move(recordings));
  return result;
}

void write_ground_truth(const GroundTruth& truth, const std::string& path) {
  json j;
  j["seed"] = truth.seed;
  j["learners"] = truth.learners;
  j["expected_mean_length"] = {{"Rest", truth.expected_length_rest},
                               {"MI_learner", truth.expected_length_mi_learner},
                               {"MI_nonlearner", truth.expected_length_mi_nonlearner}};
  j["planted_delta_length"] = {{"learner", truth.planted_delta_learner},
                               {"nonlearner", truth.planted_delta_nonlearner}};
  j["delta_convention"] = "Rest-MI";
  j["reference_min_duration_samples"] = 2;
  j["scores"] = truth.scores;
  if (!truth.miss_counts.empty()) j["miss_counts"] = truth.miss_counts;
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write ground truth: " + path);
  out << j.dump(2) << "\n";
}

SynthResult generate_to_dir(const SynthConfig& config, const std::string& out_dir) {
  SynthResult result = generate(config);
  const Dataset& ds = result.dataset;

  fs::create_directories(out_dir);
  for (const auto& ref : ds.trials()) {
    const fs::path full = fs::path(out_dir) / ref.path;
    fs::create_directories(full.parent_path());
    write_trial_csv(full.string(), ds.trial(ref).data);
  }

  json manifest;
  const DatasetManifest& m = ds.manifest();
  manifest["subjects"] = m.subjects;
  manifest["sessions"] = m.sessions;
  {
    std::vector<std::string> conds;
    for (Condition c : m.conditions) conds.push_back(to_string(c));
    manifest["conditions"] = conds;
  }
  manifest["n_rois"] = m.n_rois;
  manifest["sampling_rate_hz"] = m.sampling_rate_hz;
  manifest["roi_names"] = m.roi_names;
  manifest["scores"] = m.scores;
  json trials = json::object();
  json labels = json::object();
  for (const auto& ref : ds.trials()) {
    trials[ref.subject][ref.session][to_string(ref.condition)].push_back(ref.path);
    if (ref.label) {
      labels[ref.subject][ref.session][to_string(ref.condition)].push_back(to_string(*ref.label));
    }
  }
  manifest["trials"] = trials;
  if (m.has_labels) manifest["trial_labels"] = labels;

  std::ofstream out(fs::path(out_dir) / "manifest.json");
  if (!out) throw ValidationError("cannot write manifest in " + out_dir);
  out << manifest.dump(2) << "\n";
  out.close();

  write_ground_truth(result.truth, (fs::path(out_dir) / "ground_truth.json").string());
  return result;
}

}  // namespace avbci
