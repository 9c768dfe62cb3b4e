#include "avbci/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace avbci {

const char* to_string(Condition c) { return c == Condition::Rest ? "Rest" : "MI"; }
const char* to_string(TrialLabel l) { return l == TrialLabel::Hit ? "Hit" : "Miss"; }

Condition condition_from_string(const std::string& s) {
  if (s == "Rest") return Condition::Rest;
  if (s == "MI") return Condition::MI;
  throw ValidationError("unknown condition '" + s + "' (expected Rest or MI)");
}

TrialLabel label_from_string(const std::string& s) {
  if (s == "Hit") return TrialLabel::Hit;
  if (s == "Miss") return TrialLabel::Miss;
  throw ValidationError("unknown trial label '" + s + "' (expected Hit or Miss)");
}

TrialFilter filter_from_string(const std::string& s) {
  if (s == "all") return TrialFilter::All;
  if (s == "hit") return TrialFilter::Hit;
  if (s == "miss") return TrialFilter::Miss;
  throw ValidationError("unknown trial filter '" + s + "' (expected all, hit or miss)");
}

const char* to_string(TrialFilter f) {
  switch (f) {
    case TrialFilter::All: return "all";
    case TrialFilter::Hit: return "hit";
    default: return "miss";
  }
}

namespace {

double parse_sample(std::string_view cell, const std::string& path, int row, int col) {
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end != begin && (*(end - 1) == ' ' || *(end - 1) == '\t' || *(end - 1) == '\r')) --end;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw ValidationError(path + ": row " + std::to_string(row + 1) + ", column " +
                          std::to_string(col + 1) + ": cannot parse '" + std::string(cell) + "'");
  }
  if (!std::isfinite(value)) {
    throw ValidationError(path + ": row " + std::to_string(row + 1) + ", column " +
                          std::to_string(col + 1) + ": non-finite value");
  }
  return value;
}

}  // namespace

Eigen::MatrixXd read_trial_csv(const std::string& path, int expected_rows) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open trial file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  std::vector<std::vector<double>> rows;
  std::size_t pos = 0;
  int row_index = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string_view line(text.data() + pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) {
      std::vector<double> row;
      std::size_t cell_start = 0;
      int col = 0;
      while (true) {
        std::size_t comma = line.find(',', cell_start);
        std::string_view cell = (comma == std::string_view::npos)
                                    ? line.substr(cell_start)
                                    : line.substr(cell_start, comma - cell_start);
        row.push_back(parse_sample(cell, path, row_index, col++));
        if (comma == std::string_view::npos) break;
        cell_start = comma + 1;
      }
      if (!rows.empty() && row.size() != rows.front().size()) {
        throw ValidationError(path + ": row " + std::to_string(row_index + 1) + " has " +
                              std::to_string(row.size()) + " samples, expected " +
                              std::to_string(rows.front().size()));
      }
      rows.push_back(std::move(row));
      ++row_index;
    }
    pos = eol + 1;
  }

  if (rows.empty()) throw ValidationError(path + ": empty trial file");
  if (expected_rows > 0 && static_cast<int>(rows.size()) != expected_rows) {
    throw ValidationError(path + ": has " + std::to_string(rows.size()) +
                          " rows, expected n_rois = " + std::to_string(expected_rows));
  }

  Eigen::MatrixXd m(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  }
  return m;
}

void write_trial_csv(const std::string& path, const Eigen::MatrixXd& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write trial file: " + path);
  char buf[32];
  std::string line;
  line.reserve(static_cast<std::size_t>(data.cols()) * 12);
  for (int r = 0; r < data.rows(); ++r) {
    line.clear();
    for (int c = 0; c < data.cols(); ++c) {
      if (c) line.push_back(',');
      const int written = std::snprintf(buf, sizeof buf, "%.9g", data(r, c));
      line.append(buf, static_cast<std::size_t>(written));
    }
    line.push_back('\n');
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
  }
  if (!out) throw ValidationError("short write on trial file: " + path);
}

namespace {

const json& require_key(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(where + ": missing key '" + key + "'");
  return *it;
}

}  // namespace

Dataset load_dataset(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ValidationError("cannot open manifest: " + manifest_path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError(manifest_path + ": invalid JSON: " + e.what());
  }
  const std::string where = manifest_path;

  Dataset ds;
  ds.root_ = fs::path(manifest_path).parent_path().string();
  DatasetManifest& m = ds.manifest_;

  m.subjects = require_key(j, "subjects", where).get<std::vector<std::string>>();
  if (m.subjects.empty()) throw ValidationError(where + ": empty subject list");
  m.sessions = require_key(j, "sessions", where).get<std::vector<std::string>>();
  if (m.sessions.empty()) throw ValidationError(where + ": empty session list");
  for (const auto& c : require_key(j, "conditions", where)) {
    m.conditions.push_back(condition_from_string(c.get<std::string>()));
  }
  if (m.conditions.empty()) throw ValidationError(where + ": empty condition list");
  m.n_rois = require_key(j, "n_rois", where).get<int>();
  if (m.n_rois <= 0) throw ValidationError(where + ": n_rois must be positive");
  m.sampling_rate_hz = require_key(j, "sampling_rate_hz", where).get<double>();
  if (!(m.sampling_rate_hz > 0)) throw ValidationError(where + ": sampling_rate_hz must be > 0");
  m.roi_names = require_key(j, "roi_names", where).get<std::vector<std::string>>();
  if (static_cast<int>(m.roi_names.size()) != m.n_rois) {
    throw ValidationError(where + ": roi_names has " + std::to_string(m.roi_names.size()) +
                          " entries, expected n_rois = " + std::to_string(m.n_rois));
  }

  const json& scores = require_key(j, "scores", where);
  for (const auto& subject : m.subjects) {
    auto sit = scores.find(subject);
    if (sit == scores.end()) throw ValidationError(where + ": scores missing subject " + subject);
    for (const auto& session : m.sessions) {
      auto vit = sit->find(session);
      if (vit == sit->end()) {
        throw ValidationError(where + ": scores missing (" + subject + ", session " + session + ")");
      }
      const double v = vit->get<double>();
      if (!(v >= 0.0 && v <= 100.0)) {
        throw ValidationError(where + ": score for (" + subject + ", session " + session +
                              ") is " + std::to_string(v) + ", outside [0, 100]");
      }
      m.scores[subject][session] = v;
    }
  }

  const json& trials = require_key(j, "trials", where);
  const json* labels = nullptr;
  if (auto it = j.find("trial_labels"); it != j.end() && !it->is_null()) {
    labels = &*it;
    m.has_labels = true;
  }

  for (const auto& subject : m.subjects) {
    auto sit = trials.find(subject);
    if (sit == trials.end()) throw ValidationError(where + ": trials missing subject " + subject);
    for (const auto& session : m.sessions) {
      auto seit = sit->find(session);
      if (seit == sit->end()) {
        throw ValidationError(where + ": trials missing (" + subject + ", session " + session + ")");
      }
      for (Condition cond : m.conditions) {
        auto cit = seit->find(to_string(cond));
        if (cit == seit->end()) {
          throw ValidationError(where + ": trials missing (" + subject + ", session " + session +
                                ", " + to_string(cond) + ")");
        }
        const json* cell_labels = nullptr;
        if (labels) {
          if (auto ls = labels->find(subject); ls != labels->end()) {
            if (auto le = ls->find(session); le != ls->end()) {
              if (auto lc = le->find(to_string(cond)); lc != le->end()) cell_labels = &*lc;
            }
          }
        }
        if (cell_labels && cell_labels->size() != cit->size()) {
          throw ValidationError(where + ": trial_labels for (" + subject + ", session " + session +
                                ", " + std::string(to_string(cond)) + ") has " +
                                std::to_string(cell_labels->size()) + " entries for " +
                                std::to_string(cit->size()) + " trials");
        }
        int index = 0;
        for (const auto& rel : *cit) {
          TrialRef ref;
          ref.subject = subject;
          ref.session = session;
          ref.condition = cond;
          ref.trial_index = index;
          ref.path = rel.get<std::string>();
          const fs::path full = fs::path(ds.root_) / ref.path;
          if (!fs::exists(full)) {
            throw ValidationError(where + ": referenced trial file does not exist: " + full.string());
          }
          if (cell_labels) ref.label = label_from_string((*cell_labels)[index].get<std::string>());
          ds.trials_.push_back(std::move(ref));
          ++index;
        }
      }
    }
  }
  if (ds.trials_.empty()) throw ValidationError(where + ": dataset has no trials");
  return ds;
}

std::vector<const TrialRef*> Dataset::cell(const std::string& subject, const std::string& session,
                                           Condition condition) const {
  std::vector<const TrialRef*> out;
  for (const auto& t : trials_) {
    if (t.subject == subject && t.session == session && t.condition == condition) out.push_back(&t);
  }
  return out;
}

double Dataset::score(const std::string& subject, const std::string& session) const {
  auto sit = manifest_.scores.find(subject);
  if (sit != manifest_.scores.end()) {
    auto vit = sit->second.find(session);
    if (vit != sit->second.end()) return vit->second;
  }
  throw ValidationError("no score for (" + subject + ", session " + session + ")");
}

int Dataset::session_rank(const std::string& session) const {
  for (std::size_t i = 0; i < manifest_.sessions.size(); ++i) {
    if (manifest_.sessions[i] == session) return static_cast<int>(i);
  }
  throw ValidationError("unknown session id '" + session + "'");
}

const TrialRecording& Dataset::load_or_get(const TrialRef& ref) const {
  {
    std::lock_guard<std::mutex> lock(*cache_mutex_);
    if (auto it = cache_.find(ref.path); it != cache_.end()) return *it->second;
  }
  auto rec = std::make_shared<TrialRecording>();
  rec->data = read_trial_csv((fs::path(root_) / ref.path).string(), manifest_.n_rois);
  rec->subject = ref.subject;
  rec->session = ref.session;
  rec->condition = ref.condition;
  rec->trial_id = ref.trial_index;
  rec->sampling_rate_hz = manifest_.sampling_rate_hz;
  std::lock_guard<std::mutex> lock(*cache_mutex_);
  auto [it, inserted] = cache_.emplace(ref.path, std::move(rec));
  (void)inserted;  // a concurrent loader may have won; both parsed identical bytes
  return *it->second;
}

const TrialRecording& Dataset::trial(const TrialRef& ref) const {
  if (!memory_.empty()) {
    auto it = memory_.find(ref.path);
    if (it == memory_.end()) throw ValidationError("unknown in-memory trial key: " + ref.path);
    return *it->second;
  }
  return load_or_get(ref);
}

void Dataset::preload() const {
  if (!memory_.empty()) return;
  parallel_for(trials_.size(), [&](std::size_t i) { load_or_get(trials_[i]); });
}

Dataset Dataset::from_memory(DatasetManifest manifest, std::vector<TrialRef> refs,
                             std::vector<TrialRecording> recordings) {
  if (refs.size() != recordings.size()) {
    throw ValidationError("from_memory: refs and recordings size mismatch");
  }
  Dataset ds;
  ds.manifest_ = std::move(manifest);
  ds.trials_ = std::move(refs);
  for (std::size_t i = 0; i < ds.trials_.size(); ++i) {
    auto rec = std::make_shared<TrialRecording>(std::move(recordings[i]));
    if (rec->data.rows() != ds.manifest_.n_rois) {
      throw ValidationError("from_memory: trial " + ds.trials_[i].path + " has " +
                            std::to_string(rec->data.rows()) + " rows, expected " +
                            std::to_string(ds.manifest_.n_rois));
    }
    ds.memory_.emplace(ds.trials_[i].path, std::move(rec));
  }
  return ds;
}

std::vector<const TrialRef*> DatasetView::cell(const std::string& subject,
                                               const std::string& session,
                                               Condition condition) const {
  std::vector<const TrialRef*> out;
  for (const TrialRef* t : refs_) {
    if (t->subject == subject && t->session == session && t->condition == condition) {
      out.push_back(t);
    }
  }
  return out;
}

DatasetView filter_trials(
    const Dataset& dataset,
    const std::function<bool(Condition, const std::optional<TrialLabel>&)>& predicate,
    bool needs_labels) {
  if (needs_labels && !dataset.manifest().has_labels) {
    throw ValidationError("trial filter requires Hit/Miss labels but the dataset has none");
  }
  std::vector<const TrialRef*> refs;
  for (const auto& t : dataset.trials()) {
    if (predicate(t.condition, t.label)) refs.push_back(&t);
  }
  return DatasetView(dataset, std::move(refs));
}

DatasetView filter_trials(const Dataset& dataset, TrialFilter filter) {
  switch (filter) {
    case TrialFilter::All:
      return filter_trials(
          dataset, [](Condition, const std::optional<TrialLabel>&) { return true; }, false);
    case TrialFilter::Hit:
      return filter_trials(
          dataset,
          [](Condition, const std::optional<TrialLabel>& l) { return l == TrialLabel::Hit; },
          true);
    default:
      return filter_trials(
          dataset,
          [](Condition, const std::optional<TrialLabel>& l) { return l == TrialLabel::Miss; },
          true);
  }
}

}  // namespace avbci
