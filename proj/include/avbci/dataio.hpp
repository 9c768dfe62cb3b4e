#ifndef AVBCI_DATAIO_HPP
#define AVBCI_DATAIO_HPP

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "avbci/errors.hpp"

namespace avbci {

enum class Condition { Rest, MI };
enum class TrialLabel { Hit, Miss };

const char* to_string(Condition c);
const char* to_string(TrialLabel l);
Condition condition_from_string(const std::string& s);
TrialLabel label_from_string(const std::string& s);

/// One trial's ROI x time matrix plus identifying metadata.
struct TrialRecording {
  Eigen::MatrixXd data;  // n_rois x n_samples
  std::string subject;
  std::string session;
  Condition condition = Condition::Rest;
  int trial_id = 0;
  double sampling_rate_hz = 0.0;
};

/// Identifies one trial slot of the dataset and where its samples live.
struct TrialRef {
  std::string subject;
  std::string session;
  Condition condition = Condition::Rest;
  int trial_index = 0;                  // position within the cell's trial list
  std::string path;                     // relative to the dataset root
  std::optional<TrialLabel> label;
};

struct DatasetManifest {
  std::vector<std::string> subjects;
  std::vector<std::string> sessions;    // order defines session order
  std::vector<Condition> conditions;
  int n_rois = 0;
  double sampling_rate_hz = 0.0;
  std::vector<std::string> roi_names;
  std::map<std::string, std::map<std::string, double>> scores;  // subject -> session -> %
  bool has_labels = false;
};

/// Validated dataset. Trial matrices load lazily and are memoized; the object
/// is read-only after construction and safe for concurrent readers.
class Dataset {
 public:
  Dataset() = default;

  const DatasetManifest& manifest() const { return manifest_; }
  const std::string& root() const { return root_; }
  const std::vector<TrialRef>& trials() const { return trials_; }

  /// Trials of one (subject, session, condition) cell, in manifest order.
  std::vector<const TrialRef*> cell(const std::string& subject, const std::string& session,
                                    Condition condition) const;

  double score(const std::string& subject, const std::string& session) const;
  int session_rank(const std::string& session) const;

  const TrialRecording& trial(const TrialRef& ref) const;

  /// Loads every referenced trial file up front (parallel over files).
  void preload() const;

  /// In-memory dataset (no files); used by the generator and by tests.
  static Dataset from_memory(DatasetManifest manifest, std::vector<TrialRef> refs,
                             std::vector<TrialRecording> recordings);

  friend Dataset load_dataset(const std::string& manifest_path);

 private:
  DatasetManifest manifest_;
  std::string root_;
  std::vector<TrialRef> trials_;
  mutable std::unique_ptr<std::mutex> cache_mutex_ = std::make_unique<std::mutex>();
  mutable std::map<std::string, std::shared_ptr<const TrialRecording>> cache_;
  std::map<std::string, std::shared_ptr<const TrialRecording>> memory_;  // from_memory storage

  const TrialRecording& load_or_get(const TrialRef& ref) const;
};

/// Loads and validates a dataset from its manifest.json.
/// Throws ValidationError with file/location context on any schema, shape,
/// or range violation. Trial matrices are not read until first access.
Dataset load_dataset(const std::string& manifest_path);

/// Reads one trial CSV (n_rois rows, comma-separated samples, no header).
Eigen::MatrixXd read_trial_csv(const std::string& path, int expected_rows);
void write_trial_csv(const std::string& path, const Eigen::MatrixXd& data);

/// Non-owning filtered view over a dataset's trials. Iteration order is the
/// dataset's (lexicographic cell order); iterating twice gives the same refs.
class DatasetView {
 public:
  DatasetView(const Dataset& dataset, std::vector<const TrialRef*> refs)
      : dataset_(&dataset), refs_(std::move(refs)) {}

  const Dataset& dataset() const { return *dataset_; }
  const std::vector<const TrialRef*>& refs() const { return refs_; }
  std::size_t size() const { return refs_.size(); }

  std::vector<const TrialRef*> cell(const std::string& subject, const std::string& session,
                                    Condition condition) const;

 private:
  const Dataset* dataset_;
  std::vector<const TrialRef*> refs_;
};

enum class TrialFilter { All, Hit, Miss };
TrialFilter filter_from_string(const std::string& s);
const char* to_string(TrialFilter f);

/// View of the trials matching `predicate` over (condition, label).
/// Throws ValidationError if the predicate needs labels and none exist.
DatasetView filter_trials(
    const Dataset& dataset,
    const std::function<bool(Condition, const std::optional<TrialLabel>&)>& predicate,
    bool needs_labels);

DatasetView filter_trials(const Dataset& dataset, TrialFilter filter);

}  // namespace avbci

#endif
