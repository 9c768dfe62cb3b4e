#include "avbci/artifacts.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "avbci/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace avbci {

const char* kVersion = "0.1.0";

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double_or_nan(std::string_view s) {
  if (s == "nan" || s == "-nan") return kNan;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError("cannot parse number '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  if (!cells.empty() && !cells.back().empty() && cells.back().back() == '\r') cells.back().pop_back();
  return cells;
}

const char* feature_name(bool second) { return second ? "weighted_activations" : "mean_length"; }

double cell_value(const CellAggregate& agg, bool second) {
  const auto& v = second ? agg.mean_weighted_activations : agg.mean_length;
  return v ? *v : kNan;
}

}  // namespace

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << j.dump(2) << "\n";
}

json read_json(const std::string& path, bool upstream) {
  std::ifstream in(path);
  if (!in) {
    if (upstream) {
      throw UpstreamError("missing upstream artifact: " + path);
    }
    throw ValidationError("cannot open " + path);
  }
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw ValidationError(path + ": invalid JSON: " + e.what());
  }
}

void write_provenance(const std::string& dir, const std::string& command, const json& inputs) {
  json j;
  j["command"] = command;
  j["version"] = kVersion;
  const auto now = std::chrono::system_clock::now();
  j["timestamp_unix"] =
      std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
  j["inputs"] = inputs;
  write_json(j, (fs::path(dir) / "provenance.json").string());
}

void write_feature_table(const FeatureTable& table, const std::string& dir,
                         const json& provenance_inputs) {
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "features.csv");
    if (!out) throw ValidationError("cannot write features.csv in " + dir);
    out << "subject,session,condition,trial,k,min_dur_samples,n_avalanches,mean_length,"
           "weighted_activations\n";
    for (const auto& row : table.rows()) {
      out << row.key.subject << ',' << row.key.session << ',' << to_string(row.key.condition)
          << ',' << row.key.trial << ',' << row.key.couple.k << ','
          << row.key.couple.min_duration_samples << ',' << row.features.n_avalanches << ','
          << fmt_double(row.features.mean_avalanche_length.value_or(kNan)) << ','
          << fmt_double(row.features.weighted_mean_activations.value_or(kNan)) << '\n';
    }
  }
  {
    std::ofstream out(fs::path(dir) / "roi_profiles.csv");
    if (!out) throw ValidationError("cannot write roi_profiles.csv in " + dir);
    out << "subject,session,condition,trial,k,min_dur_samples";
    for (int r = 0; r < table.n_rois(); ++r) out << ",roi_" << r;
    out << '\n';
    for (const auto& row : table.rows()) {
      out << row.key.subject << ',' << row.key.session << ',' << to_string(row.key.condition)
          << ',' << row.key.trial << ',' << row.key.couple.k << ','
          << row.key.couple.min_duration_samples;
      for (int r = 0; r < table.n_rois(); ++r) {
        const auto& profile = row.features.roi_profile;
        out << ','
            << fmt_double(r < static_cast<int>(profile.size()) ? profile[static_cast<std::size_t>(r)]
                                                               : kNan);
      }
      out << '\n';
    }
  }
  json inputs = provenance_inputs;
  json grid = json::array();
  for (const auto& c : table.couples()) {
    grid.push_back({{"k", c.k},
                    {"min_dur_samples", c.min_duration_samples},
                    {"min_duration_ms", c.min_duration_ms},
                    {"extended", c.extended}});
  }
  inputs["grid"] = grid;
  inputs["subjects"] = table.subjects();
  inputs["sessions"] = table.sessions();
  inputs["n_rois"] = table.n_rois();
  inputs["sampling_rate_hz"] = table.sampling_rate_hz();
  write_provenance(dir, "features", inputs);
}

FeatureTable load_feature_table(const std::string& dir) {
  const fs::path features_path = fs::path(dir) / "features.csv";
  const fs::path profiles_path = fs::path(dir) / "roi_profiles.csv";
  const fs::path prov_path = fs::path(dir) / "provenance.json";
  if (!fs::exists(features_path) || !fs::exists(prov_path)) {
    throw UpstreamError("missing features artifacts in " + dir +
                        " (expected features.csv and provenance.json; run the features command)");
  }
  const json prov = read_json(prov_path.string(), true);
  const json& inputs = prov.at("inputs");

  std::vector<ParameterCouple> couples;
  for (const auto& g : inputs.at("grid")) {
    ParameterCouple c;
    c.k = g.at("k").get<int>();
    c.min_duration_samples = g.at("min_dur_samples").get<int>();
    c.min_duration_ms = g.at("min_duration_ms").get<double>();
    c.extended = g.at("extended").get<bool>();
    couples.push_back(c);
  }
  const auto subjects = inputs.at("subjects").get<std::vector<std::string>>();
  const auto sessions = inputs.at("sessions").get<std::vector<std::string>>();
  const int n_rois = inputs.at("n_rois").get<int>();
  const double rate = inputs.at("sampling_rate_hz").get<double>();

  auto couple_of = [&](int k, int d) -> ParameterCouple {
    for (const auto& c : couples) {
      if (c.k == k && c.min_duration_samples == d) return c;
    }
    throw ValidationError(dir + ": row references couple k" + std::to_string(k) + "_d" +
                          std::to_string(d) + " absent from provenance grid");
  };

  std::ifstream in(features_path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<FeatureRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 9) throw ValidationError(features_path.string() + ": malformed row");
    FeatureRow row;
    row.key.subject = cells[0];
    row.key.session = cells[1];
    row.key.condition = condition_from_string(cells[2]);
    row.key.trial = static_cast<int>(parse_double_or_nan(cells[3]));
    row.key.couple = couple_of(static_cast<int>(parse_double_or_nan(cells[4])),
                               static_cast<int>(parse_double_or_nan(cells[5])));
    row.features.n_avalanches = static_cast<int>(parse_double_or_nan(cells[6]));
    const double len = parse_double_or_nan(cells[7]);
    const double act = parse_double_or_nan(cells[8]);
    if (!std::isnan(len)) row.features.mean_avalanche_length = len;
    if (!std::isnan(act)) row.features.weighted_mean_activations = act;
    rows.push_back(std::move(row));
  }

  if (fs::exists(profiles_path)) {
    std::ifstream pin(profiles_path);
    std::getline(pin, line);  // header
    std::size_t idx = 0;
    while (std::getline(pin, line)) {
      if (line.empty()) continue;
      if (idx >= rows.size()) throw ValidationError(profiles_path.string() + ": extra rows");
      const auto cells = split_csv_line(line);
      if (static_cast<int>(cells.size()) != 6 + n_rois) {
        throw ValidationError(profiles_path.string() + ": malformed row");
      }
      auto& profile = rows[idx].features.roi_profile;
      bool any_finite = false;
      profile.resize(static_cast<std::size_t>(n_rois));
      for (int r = 0; r < n_rois; ++r) {
        profile[static_cast<std::size_t>(r)] = parse_double_or_nan(cells[static_cast<std::size_t>(6 + r)]);
        any_finite = any_finite || !std::isnan(profile[static_cast<std::size_t>(r)]);
      }
      if (!any_finite) profile.clear();  // undefined trial
      ++idx;
    }
    if (idx != rows.size()) throw ValidationError(profiles_path.string() + ": row count mismatch");
  }

  return FeatureTable(couples, std::move(rows), subjects, sessions, n_rois, rate);
}

std::vector<ParameterCouple> resolve_grid(const GridSpec& spec, double sampling_rate_hz) {
  if (spec.mode == "canonical") return canonical_grid(sampling_rate_hz);
  if (spec.mode == "explicit") {
    if (spec.explicit_couples.empty()) throw ValidationError("empty explicit couple grid");
    return spec.explicit_couples;
  }
  if (spec.mode == "file") {
    const json j = read_json(spec.file, false);
    if (!j.is_array() || j.empty()) {
      throw ValidationError(spec.file + ": grid file must be a nonempty JSON array");
    }
    std::vector<ParameterCouple> couples;
    for (const auto& entry : j) {
      const int k = entry.at("k").get<int>();
      int samples;
      if (entry.contains("min_dur_samples")) {
        samples = entry.at("min_dur_samples").get<int>();
      } else if (entry.contains("min_duration_ms")) {
        samples = ms_to_samples(entry.at("min_duration_ms").get<double>(), sampling_rate_hz);
      } else {
        throw ValidationError(spec.file + ": couple needs min_dur_samples or min_duration_ms");
      }
      couples.push_back(make_couple(k, samples, sampling_rate_hz));
    }
    return couples;
  }
  throw ValidationError("unknown grid mode '" + spec.mode + "'");
}

namespace {

std::map<ParameterCouple, std::vector<int>> load_selection_map(const std::string& path) {
  const json j = read_json(path, true);
  std::map<ParameterCouple, std::vector<int>> out;
  for (const auto& sel : j.at("selections")) {
    if (sel.contains("error")) continue;
    ParameterCouple c;
    c.k = sel.at("k").get<int>();
    c.min_duration_samples = sel.at("min_dur_samples").get<int>();
    out[c] = sel.at("roi_indices").get<std::vector<int>>();
  }
  return out;
}

}  // namespace

FeatureTable run_features(const Dataset& dataset, const FeatureRunOptions& options) {
  const DatasetView view = filter_trials(dataset, options.filter);
  const auto couples = resolve_grid(options.grid, dataset.manifest().sampling_rate_hz);

  if (options.roi_selection_file.empty()) {
    FeatureOptions fo;
    fo.excursion = options.excursion;
    return compute_feature_table(view, couples, fo);
  }

  // Per-couple ROI restriction: each couple is recomputed on its own selected
  // set; profiles are re-expanded to full width with NaN at excluded ROIs.
  const auto selection_map = load_selection_map(options.roi_selection_file);
  std::vector<FeatureRow> merged;
  for (const auto& couple : couples) {
    auto it = selection_map.find(couple);
    if (it == selection_map.end()) {
      throw ValidationError("roi selection file has no entry for couple " + couple.tag());
    }
    if (it->second.empty()) {
      throw ValidationError("no ROIs selected for couple " + couple.tag());
    }
    FeatureOptions fo;
    fo.excursion = options.excursion;
    fo.roi_subset = it->second;
    FeatureTable part = compute_feature_table(view, {couple}, fo);
    std::vector<int> sorted_rois = it->second;
    std::sort(sorted_rois.begin(), sorted_rois.end());
    for (const auto& row : part.rows()) {
      FeatureRow expanded = row;
      if (!row.features.roi_profile.empty()) {
        std::vector<double> full(static_cast<std::size_t>(dataset.manifest().n_rois), kNan);
        for (std::size_t j = 0; j < sorted_rois.size(); ++j) {
          full[static_cast<std::size_t>(sorted_rois[j])] = row.features.roi_profile[j];
        }
        expanded.features.roi_profile = std::move(full);
      }
      merged.push_back(std::move(expanded));
    }
  }
  return FeatureTable(couples, std::move(merged), dataset.manifest().subjects,
                      dataset.manifest().sessions, dataset.manifest().n_rois,
                      dataset.manifest().sampling_rate_hz);
}

namespace {

// subject-level matrix value(subject, session) for one condition; nullopt if
// any cell is missing/undefined.
std::optional<std::vector<std::vector<double>>> condition_matrix(const FeatureTable& table,
                                                                 const ParameterCouple& couple,
                                                                 Condition cond, bool second,
                                                                 std::string* why) {
  std::vector<std::vector<double>> m;
  for (const auto& subject : table.subjects()) {
    std::vector<double> row;
    for (const auto& session : table.sessions()) {
      const CellAggregate* cell = table.cell(subject, session, cond, couple);
      const double v = cell ? cell_value(*cell, second) : kNan;
      if (std::isnan(v)) {
        if (why) {
          *why = "(" + subject + ", session " + session + ", " + to_string(cond) +
                 ") has no defined trials";
        }
        return std::nullopt;
      }
      row.push_back(v);
    }
    m.push_back(std::move(row));
  }
  return m;
}

json couple_json(const ParameterCouple& c) {
  return {{"k", c.k},
          {"min_dur_samples", c.min_duration_samples},
          {"min_duration_ms", c.min_duration_ms}};
}

}  // namespace

json run_stats_battery(const Dataset& dataset, const FeatureTable& table,
                       const StatsOptions& options) {
  json out;
  out["filter"] = to_string(options.filter);
  out["n_permutations"] = options.n_permutations;
  out["seed"] = options.seed;
  out["perm_scheme"] = to_string(options.scheme);
  out["bonferroni_reference_p"] = kBonferroniReferenceP;
  json results = json::array();
  json notes = json::array();

  const auto& sessions = table.sessions();
  std::uint64_t stream = 0;
  for (const auto& couple : table.couples()) {
    for (bool second : {false, true}) {
      const char* feature = feature_name(second);
      std::string why;
      const auto rest = condition_matrix(table, couple, Condition::Rest, second, &why);
      const auto mi = condition_matrix(table, couple, Condition::MI, second, &why);
      if (!rest || !mi) {
        notes.push_back(std::string("skipped ") + feature + " for " + couple.tag() + ": " + why);
        continue;
      }

      // global effects: permutation repeated-measures ANOVA
      if (sessions.size() >= 2) {
        // cells[subject][condition][session], condition levels (Rest, MI)
        std::vector<std::vector<std::vector<double>>> cells;
        for (std::size_t i = 0; i < rest->size(); ++i) {
          cells.push_back({(*rest)[i], (*mi)[i]});
        }
        const auto effects = perm_rm_anova(cells, options.n_permutations,
                                           derive_seed(options.seed, stream++), "condition",
                                           "session", options.scheme);
        json entry;
        entry["test"] = "perm_rm_anova";
        entry["feature"] = feature;
        entry["couple"] = couple_json(couple);
        json effs = json::array();
        for (const auto& e : effects) {
          json eff;
          eff["effect"] = e.effect;
          eff["F"] = e.f;
          eff["p"] = e.p;
          effs.push_back(std::move(eff));
        }
        entry["effects"] = effs;
        results.push_back(std::move(entry));
      } else {
        notes.push_back(std::string("perm_rm_anova skipped for ") + feature + " " + couple.tag() +
                        ": insufficient sessions");
      }

      // learning effect: Friedman within each condition
      for (Condition cond : {Condition::MI, Condition::Rest}) {
        if (sessions.size() < 2) {
          notes.push_back(std::string("friedman skipped for ") + feature + " " + couple.tag() +
                          " (" + to_string(cond) + "): insufficient sessions");
          continue;
        }
        const auto& m = cond == Condition::Rest ? *rest : *mi;
        try {
          const FriedmanResult fr = friedman(m);
          results.push_back({{"test", "friedman"},
                             {"feature", feature},
                             {"couple", couple_json(couple)},
                             {"condition", to_string(cond)},
                             {"chi2", fr.chi2},
                             {"df", fr.df},
                             {"p", fr.p}});
        } catch (const Error& e) {
          notes.push_back(std::string("friedman skipped for ") + feature + " " + couple.tag() +
                          " (" + to_string(cond) + "): " + e.what());
        }
      }

      // task-condition effect: Wilcoxon per session
      for (std::size_t s = 0; s < sessions.size(); ++s) {
        std::vector<double> mi_vals, rest_vals;
        for (std::size_t i = 0; i < mi->size(); ++i) {
          mi_vals.push_back((*mi)[i][s]);
          rest_vals.push_back((*rest)[i][s]);
        }
        try {
          const WilcoxonResult wr = wilcoxon_signed_rank(mi_vals, rest_vals);
          results.push_back({{"test", "wilcoxon"},
                             {"feature", feature},
                             {"couple", couple_json(couple)},
                             {"session", sessions[s]},
                             {"W", wr.w},
                             {"p", wr.p},
                             {"n", wr.n},
                             {"exact", wr.exact}});
        } catch (const Error& e) {
          notes.push_back(std::string("wilcoxon skipped for ") + feature + " " + couple.tag() +
                          " session " + sessions[s] + ": " + e.what());
        }
      }
    }
  }
  out["results"] = std::move(results);

  // Final-session Hit/Miss section, when labels exist.
  if (dataset.manifest().has_labels) {
    json hm;
    hm["session"] = sessions.back();
    json hm_results = json::array();
    const std::string& final_session = sessions.back();

    for (const auto& couple : table.couples()) {
      for (bool second : {false, true}) {
        const char* feature = feature_name(second);
        // per subject, per (condition, label): mean over defined trials
        struct GroupVals {
          std::map<std::string, double> mi_hit, mi_miss, rest_hit, rest_miss;
        } groups;
        for (const auto& subject : table.subjects()) {
          for (Condition cond : {Condition::Rest, Condition::MI}) {
            auto refs = dataset.cell(subject, final_session, cond);
            std::map<int, TrialLabel> labels;
            for (const TrialRef* ref : refs) {
              if (ref->label) labels[ref->trial_index] = *ref->label;
            }
            double sum_hit = 0, sum_miss = 0;
            int n_hit = 0, n_miss = 0;
            for (const FeatureRow* row : table.cell_rows(subject, final_session, cond, couple)) {
              auto it = labels.find(row->key.trial);
              if (it == labels.end()) continue;
              const auto& opt = second ? row->features.weighted_mean_activations
                                       : row->features.mean_avalanche_length;
              if (!opt) continue;
              if (it->second == TrialLabel::Hit) {
                sum_hit += *opt;
                ++n_hit;
              } else {
                sum_miss += *opt;
                ++n_miss;
              }
            }
            auto& hit_map = cond == Condition::MI ? groups.mi_hit : groups.rest_hit;
            auto& miss_map = cond == Condition::MI ? groups.mi_miss : groups.rest_miss;
            if (n_hit > 0) hit_map[subject] = sum_hit / n_hit;
            if (n_miss > 0) miss_map[subject] = sum_miss / n_miss;
          }
        }

        auto paired_wilcoxon = [&](const std::map<std::string, double>& a,
                                   const std::map<std::string, double>& b, const char* name) {
          std::vector<double> xs, ys;
          for (const auto& [subject, va] : a) {
            auto it = b.find(subject);
            if (it != b.end()) {
              xs.push_back(va);
              ys.push_back(it->second);
            }
          }
          json entry{{"test", "wilcoxon"},       {"comparison", name},
                     {"feature", feature},        {"couple", couple_json(couple)},
                     {"n_subjects", xs.size()}};
          try {
            const WilcoxonResult wr = wilcoxon_signed_rank(xs, ys);
            entry["W"] = wr.w;
            entry["p"] = wr.p;
          } catch (const Error& e) {
            entry["skipped"] = e.what();
          }
          hm_results.push_back(std::move(entry));
        };
        paired_wilcoxon(groups.mi_hit, groups.mi_miss, "MI-Hit vs MI-Miss");
        paired_wilcoxon(groups.rest_hit, groups.rest_miss, "Rest-Hit vs Rest-Miss");
        paired_wilcoxon(groups.mi_hit, groups.rest_hit, "MI-Hit vs Rest-Hit");

        // condition x label permutation ANOVA over subjects with all 4 cells
        std::vector<std::vector<std::vector<double>>> cells;
        for (const auto& subject : table.subjects()) {
          const auto a = groups.rest_hit.find(subject);
          const auto b = groups.rest_miss.find(subject);
          const auto c = groups.mi_hit.find(subject);
          const auto d = groups.mi_miss.find(subject);
          if (a != groups.rest_hit.end() && b != groups.rest_miss.end() &&
              c != groups.mi_hit.end() && d != groups.mi_miss.end()) {
            cells.push_back({{a->second, b->second}, {c->second, d->second}});
          }
        }
        json entry{{"test", "perm_rm_anova"},
                   {"factors", "condition x label"},
                   {"feature", feature},
                   {"couple", couple_json(couple)},
                   {"n_subjects", cells.size()}};
        if (cells.size() >= 2) {
          const auto effects = perm_rm_anova(cells, options.n_permutations,
                                             derive_seed(options.seed, stream++), "condition",
                                             "label", options.scheme);
          json effs = json::array();
          for (const auto& e : effects) {
            json eff;
            eff["effect"] = e.effect;
            eff["F"] = e.f;
            eff["p"] = e.p;
            effs.push_back(std::move(eff));
          }
          entry["effects"] = effs;
        } else {
          entry["skipped"] = "fewer than 2 subjects with all four (condition, label) cells";
        }
        hm_results.push_back(std::move(entry));
      }
    }
    hm["results"] = std::move(hm_results);
    out["hitmiss"] = std::move(hm);
  }

  out["notes"] = std::move(notes);
  return out;
}

json run_rmcorr(const Dataset& dataset, const FeatureTable& table) {
  const DeltaTable deltas = delta_features(table);
  json out;
  out["delta_convention"] = deltas.convention;
  json results = json::array();

  for (const auto& couple : table.couples()) {
    for (bool second : {false, true}) {
      std::vector<double> x, y;
      std::vector<std::string> ids;
      json observations = json::array();
      for (const auto& row : deltas.rows) {
        if (!(row.couple == couple)) continue;
        const double delta = second ? row.delta_activations : row.delta_length;
        const double score = dataset.score(row.subject, row.session);
        x.push_back(delta);
        y.push_back(score);
        ids.push_back(row.subject);
        observations.push_back(
            {{"subject", row.subject}, {"session", row.session}, {"x", delta}, {"y", score}});
      }
      json entry;
      entry["feature"] = second ? "delta_activations" : "delta_length";
      entry["couple"] = couple_json(couple);
      try {
        const RmCorrResult res = rmcorr(x, y, ids);
        entry["r"] = res.r;
        entry["df"] = res.df;
        entry["p"] = res.p;
        entry["slope"] = res.slope;
        entry["n_obs"] = res.n_obs;
        entry["n_subjects"] = res.n_subjects;
        entry["warnings"] = res.warnings;
        entry["observations"] = std::move(observations);
      } catch (const Error& e) {
        entry["skipped"] = e.what();
      }
      results.push_back(std::move(entry));
    }
  }
  out["results"] = std::move(results);
  out["warnings"] = deltas.warnings;
  return out;
}

json run_roi_selection(const Dataset& dataset, const FeatureTable& table, double alpha) {
  json out;
  out["alpha"] = alpha;
  json selections = json::array();
  int usable = 0;
  for (const auto& couple : table.couples()) {
    json entry;
    entry["k"] = couple.k;
    entry["min_dur_samples"] = couple.min_duration_samples;
    try {
      const auto maps = t_maps(table, couple);
      json notes = json::array();
      for (const auto& m : maps) {
        if (!m.note.empty() && !m.missing) {
          notes.push_back("(" + m.subject + ", session " + m.session + "): " + m.note);
        }
      }
      const RoiSelection sel = select_rois(maps, couple, alpha, table.n_rois());
      entry["roi_indices"] = sel.selected;
      json names = json::array();
      for (int r : sel.selected) {
        names.push_back(dataset.manifest().roi_names[static_cast<std::size_t>(r)]);
      }
      entry["roi_names"] = names;
      entry["p_session"] = sel.p_session;
      entry["p_grandmean"] = sel.p_grandmean;
      entry["notes"] = notes;
      ++usable;
    } catch (const Error& e) {
      entry["error"] = e.what();
    }
    selections.push_back(std::move(entry));
  }
  if (usable == 0) throw ValidationError("roi selection failed for every couple");
  out["selections"] = std::move(selections);
  return out;
}

namespace {

json loo_report_json(const LooReport& report, bool regression) {
  json subjects = json::array();
  for (const auto& fold : report.folds) {
    json f;
    f["subject"] = fold.subject;
    f["actual"] = fold.actual;
    if (fold.failed) {
      f["failed"] = fold.error;
    } else {
      if (regression) {
        f["predicted"] = fold.predicted;
      } else {
        f["actual_label"] = fold.actual_label;
        f["predicted_label"] = fold.predicted_label;
        f["decision_value"] = fold.predicted;
      }
      f["hyper"] = {{"C", fold.hyper.c}, {"epsilon", fold.hyper.epsilon}, {"lambda", fold.hyper.lambda}};
      if (fold.beta.size() > 0) {
        std::vector<double> beta(fold.beta.data(), fold.beta.data() + fold.beta.size());
        f["beta"] = beta;
      }
    }
    subjects.push_back(std::move(f));
  }
  json summary;
  if (regression) {
    summary["rmse"] = report.rmse;
  } else {
    summary["accuracy"] = report.accuracy;
    summary["confusion"] = {{report.confusion[0][0], report.confusion[0][1]},
                            {report.confusion[1][0], report.confusion[1][1]}};
  }
  summary["n_failed"] = report.n_failed;
  return json{{"subjects", std::move(subjects)}, {"summary", std::move(summary)}};
}

}  // namespace

json run_predict(const Dataset& dataset, const FeatureTable& table, const PredictOptions& options) {
  ParameterCouple couple;
  if (options.couple) {
    couple = *options.couple;
    bool found = false;
    for (const auto& c : table.couples()) found = found || c == couple;
    if (!found) {
      throw ValidationError("couple " + couple.tag() +
                            " not present in the feature table; recompute features or pick one of "
                            "the table's couples");
    }
  } else if (table.couples().size() == 1) {
    couple = table.couples().front();
  } else {
    throw ValidationError("feature table has " + std::to_string(table.couples().size()) +
                          " couples; pass --couple k:samples to pick one");
  }

  const DeltaTable deltas = delta_features(table);
  const auto series = assemble_design(deltas, couple, dataset.manifest().sessions,
                                      dataset.manifest().scores, options.chance);

  const bool regression = options.kind == ModelKind::Lsvr || options.kind == ModelKind::Svr;
  const LooReport main_report = loo_evaluate(series, options.kind);

  json out = loo_report_json(main_report, regression);
  out["model"] = to_string(options.kind);
  out["couple"] = couple_json(couple);
  out["chance"] = options.chance;
  out["seed"] = options.seed;
  out["delta_convention"] = deltas.convention;
  out["n_training_sessions"] = static_cast<int>(dataset.manifest().sessions.size()) - 1;
  out["target_session"] = dataset.manifest().sessions.back();

  // baseline without temporal modeling, for the longitudinal kinds
  if (options.kind == ModelKind::Lsvr) {
    const LooReport base = loo_evaluate(series, ModelKind::Svr);
    out["summary"]["baseline"] = {{"model", "svr"}, {"rmse", base.rmse}, {"n_failed", base.n_failed}};
  } else if (options.kind == ModelKind::Lsvc) {
    const LooReport base = loo_evaluate(series, ModelKind::Svc);
    out["summary"]["baseline"] = {{"model", "svc"},
                                  {"accuracy", base.accuracy},
                                  {"n_failed", base.n_failed}};
  }

  if (options.shuffle_control) {
    if (options.kind == ModelKind::Lsvr || options.kind == ModelKind::Lsvc) {
      const auto shuffled = shuffle_sessions_control(series, options.seed);
      const LooReport control = loo_evaluate(shuffled, options.kind);
      json ctl;
      ctl["seed"] = options.seed;
      if (regression) {
        ctl["rmse"] = control.rmse;
      } else {
        ctl["accuracy"] = control.accuracy;
        ctl["confusion"] = {{control.confusion[0][0], control.confusion[0][1]},
                            {control.confusion[1][0], control.confusion[1][1]}};
      }
      ctl["n_failed"] = control.n_failed;
      out["summary"]["shuffle_control"] = std::move(ctl);
    } else {
      out["summary"]["shuffle_control"] = {
          {"note", "session order does not enter the svr/svc baselines; control skipped"}};
    }
  }
  return out;
}

namespace {

struct ReportSources {
  std::optional<FeatureTable> features;
  json stats;
  json rmcorr_data;
  json selection;
  json predictions;
};

void append_effect_tables(const ReportSources& src, const std::string& out_dir,
                          json& written) {
  if (src.stats.is_null()) return;
  // group stats results by couple
  std::map<std::pair<int, int>, std::vector<const json*>> by_couple;
  for (const auto& entry : src.stats.at("results")) {
    const auto& c = entry.at("couple");
    by_couple[{c.at("k").get<int>(), c.at("min_dur_samples").get<int>()}].push_back(&entry);
  }
  for (const auto& [key, entries] : by_couple) {
    char name[64];
    std::snprintf(name, sizeof name, "effects_k%d_d%d.csv", key.first, key.second);
    std::ofstream out(fs::path(out_dir) / name);
    out << "feature,test,scope,statistic,p,significant\n";
    for (const json* e : entries) {
      const std::string test = e->at("test").get<std::string>();
      const std::string feature = e->at("feature").get<std::string>();
      if (test == "perm_rm_anova") {
        for (const auto& eff : e->at("effects")) {
          const double p = eff.at("p").get<double>();
          out << feature << ",perm_rm_anova," << eff.at("effect").get<std::string>() << ','
              << eff.at("F").get<double>() << ',' << p << ',' << (p < 0.05 ? 1 : 0) << '\n';
        }
      } else if (test == "friedman") {
        const double p = e->at("p").get<double>();
        out << feature << ",friedman," << e->at("condition").get<std::string>() << ','
            << e->at("chi2").get<double>() << ',' << p << ',' << (p < 0.05 ? 1 : 0) << '\n';
      } else if (test == "wilcoxon") {
        const double p = e->at("p").get<double>();
        out << feature << ",wilcoxon,session " << e->at("session").get<std::string>() << ','
            << e->at("W").get<double>() << ',' << p << ',' << (p < 0.05 ? 1 : 0) << '\n';
      }
    }
    written.push_back(name);
  }
}

void append_trend_tables(const ReportSources& src, const std::string& out_dir, json& written) {
  if (src.rmcorr_data.is_null()) return;
  for (const auto& entry : src.rmcorr_data.at("results")) {
    if (entry.contains("skipped") || !entry.contains("observations")) continue;
    const double slope = entry.at("slope").get<double>();
    const auto& c = entry.at("couple");
    char name[96];
    std::snprintf(name, sizeof name, "trend_%s_k%d_d%d.csv",
                  entry.at("feature").get<std::string>().c_str(), c.at("k").get<int>(),
                  c.at("min_dur_samples").get<int>());
    // per-subject fitted lines share the common slope; intercepts differ
    std::map<std::string, std::vector<std::pair<double, double>>> per_subject;
    for (const auto& obs : entry.at("observations")) {
      per_subject[obs.at("subject").get<std::string>()].push_back(
          {obs.at("x").get<double>(), obs.at("y").get<double>()});
    }
    std::ofstream out(fs::path(out_dir) / name);
    out << "subject,intercept,slope,x_min,x_max\n";
    double gx = 0, gy = 0;
    int gn = 0;
    double gxmin = std::numeric_limits<double>::infinity(), gxmax = -gxmin;
    for (const auto& [subject, pts] : per_subject) {
      double mx = 0, my = 0;
      double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
      for (const auto& [x, y] : pts) {
        mx += x;
        my += y;
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        gx += x;
        gy += y;
        ++gn;
      }
      mx /= static_cast<double>(pts.size());
      my /= static_cast<double>(pts.size());
      gxmin = std::min(gxmin, xmin);
      gxmax = std::max(gxmax, xmax);
      out << subject << ',' << (my - slope * mx) << ',' << slope << ',' << xmin << ',' << xmax
          << '\n';
    }
    if (gn > 0) {
      out << "pooled," << (gy / gn - slope * gx / gn) << ',' << slope << ',' << gxmin << ','
          << gxmax << '\n';
    }
    written.push_back(name);
  }
}

void append_density_grids(const ReportSources& src, const std::string& out_dir, json& written,
                          json& notes) {
  if (!src.features) return;
  const FeatureTable& table = *src.features;
  for (const auto& couple : table.couples()) {
    for (bool second : {false, true}) {
      for (const auto& session : table.sessions()) {
        for (Condition cond : {Condition::Rest, Condition::MI}) {
          std::vector<double> values;
          for (const auto& subject : table.subjects()) {
            const CellAggregate* cell = table.cell(subject, session, cond, couple);
            if (!cell) continue;
            const double v = cell_value(*cell, second);
            if (!std::isnan(v)) values.push_back(v);
          }
          char name[128];
          std::snprintf(name, sizeof name, "density_%s_k%d_d%d_s%s_%s.csv",
                        feature_name(second), couple.k, couple.min_duration_samples,
                        session.c_str(), to_string(cond));
          try {
            const DensityCurve curve = density_report(values, 256);
            std::ofstream out(fs::path(out_dir) / name);
            out << "x,density\n";
            for (std::size_t i = 0; i < curve.x.size(); ++i) {
              out << fmt_double(curve.x[i]) << ',' << fmt_double(curve.pdf[i]) << '\n';
            }
            written.push_back(name);
          } catch (const Error& e) {
            notes.push_back(std::string(name) + " skipped: " + e.what());
          }
        }
      }
    }
  }
}

}  // namespace

json run_report(const std::string& artifact_dir, const std::string& out_dir) {
  if (!fs::exists(artifact_dir)) {
    throw ValidationError("report: artifact directory does not exist: " + artifact_dir);
  }
  ReportSources src;
  json missing = json::array();
  if (fs::exists(fs::path(artifact_dir) / "features.csv")) {
    src.features = load_feature_table(artifact_dir);
  } else {
    missing.push_back("features (run the features command)");
  }
  auto try_load = [&](const char* file, const char* hint) -> json {
    const fs::path p = fs::path(artifact_dir) / file;
    if (fs::exists(p)) return read_json(p.string(), false);
    missing.push_back(std::string(file) + " (" + hint + ")");
    return json();
  };
  src.stats = try_load("stats.json", "run the stats command");
  src.rmcorr_data = try_load("rmcorr.json", "run the rmcorr command");
  src.selection = try_load("selection.json", "run the roi-select command");
  src.predictions = try_load("predictions.json", "run the predict command");

  if (!src.features && src.stats.is_null() && src.rmcorr_data.is_null() &&
      src.selection.is_null() && src.predictions.is_null()) {
    throw UpstreamError("report: no analysis artifacts found in " + artifact_dir);
  }

  fs::create_directories(out_dir);
  json written = json::array();
  json notes = json::array();
  append_effect_tables(src, out_dir, written);
  append_trend_tables(src, out_dir, written);
  append_density_grids(src, out_dir, written, notes);

  // human-readable summary
  {
    std::ofstream out(fs::path(out_dir) / "summary.txt");
    out << "avbci report\n============\n\n";
    if (src.features) {
      out << "features: " << src.features->rows().size() << " trial rows, "
          << src.features->couples().size() << " couples, " << src.features->subjects().size()
          << " subjects, " << src.features->sessions().size() << " sessions\n";
    }
    if (!src.stats.is_null()) {
      int significant = 0, total = 0;
      for (const auto& e : src.stats.at("results")) {
        if (e.contains("p")) {
          ++total;
          if (e.at("p").get<double>() < 0.05) ++significant;
        } else if (e.contains("effects")) {
          for (const auto& eff : e.at("effects")) {
            ++total;
            if (eff.at("p").get<double>() < 0.05) ++significant;
          }
        }
      }
      out << "stats: " << significant << "/" << total << " tests with p < 0.05 (filter "
          << src.stats.at("filter").get<std::string>() << ")\n";
      if (src.stats.contains("hitmiss")) {
        out << "stats: hit/miss section present (Bonferroni reference p = "
            << kBonferroniReferenceP << ")\n";
      }
    }
    if (!src.rmcorr_data.is_null()) {
      out << "rmcorr (delta convention " << src.rmcorr_data.at("delta_convention").get<std::string>()
          << "):\n";
      for (const auto& e : src.rmcorr_data.at("results")) {
        if (e.contains("skipped")) continue;
        const auto& c = e.at("couple");
        out << "  " << e.at("feature").get<std::string>() << " k" << c.at("k").get<int>() << "_d"
            << c.at("min_dur_samples").get<int>() << ": r = " << e.at("r").get<double>()
            << ", p = " << e.at("p").get<double>() << "\n";
      }
    }
    if (!src.selection.is_null()) {
      out << "roi selection (alpha " << src.selection.at("alpha").get<double>() << "):\n";
      for (const auto& sel : src.selection.at("selections")) {
        out << "  k" << sel.at("k").get<int>() << "_d" << sel.at("min_dur_samples").get<int>()
            << ": ";
        if (sel.contains("error")) {
          out << "failed (" << sel.at("error").get<std::string>() << ")\n";
        } else {
          out << sel.at("roi_indices").size() << " ROIs\n";
        }
      }
    }
    if (!src.predictions.is_null()) {
      const auto& summary = src.predictions.at("summary");
      out << "predictions (" << src.predictions.at("model").get<std::string>() << "): ";
      if (summary.contains("rmse")) out << "rmse = " << summary.at("rmse").get<double>();
      if (summary.contains("accuracy")) out << "accuracy = " << summary.at("accuracy").get<double>();
      out << "\n";
      if (summary.contains("baseline")) {
        out << "  baseline " << summary.at("baseline").at("model").get<std::string>() << ": ";
        if (summary.at("baseline").contains("rmse")) {
          out << "rmse = " << summary.at("baseline").at("rmse").get<double>();
        } else {
          out << "accuracy = " << summary.at("baseline").at("accuracy").get<double>();
        }
        out << "\n";
      }
      if (summary.contains("shuffle_control") && summary.at("shuffle_control").contains("accuracy")) {
        out << "  shuffled-session control: accuracy = "
            << summary.at("shuffle_control").at("accuracy").get<double>() << "\n";
      }
    }
    if (!missing.empty()) {
      out << "\nmissing inputs:\n";
      for (const auto& m : missing) out << "  - " << m.get<std::string>() << "\n";
    }
    written.push_back("summary.txt");
  }

  json out;
  out["written"] = std::move(written);
  out["missing"] = std::move(missing);
  out["notes"] = std::move(notes);
  return out;
}

}  // namespace avbci
