#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "avbci/dataio.hpp"
#include "avbci/synth.hpp"

namespace fs = std::filesystem;
using namespace avbci;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / ("avbci_test_" + name);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& p, const std::string& content) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p);
  out << content;
}

const char* kMinimalManifest = R"({
  "subjects": ["S01"],
  "sessions": ["1"],
  "conditions": ["Rest", "MI"],
  "n_rois": 2,
  "sampling_rate_hz": 250.0,
  "roi_names": ["a", "b"],
  "trials": {"S01": {"1": {"Rest": ["t0.csv"], "MI": ["t1.csv"]}}},
  "scores": {"S01": {"1": 60.0}}
})";

}  // namespace

TEST_CASE("manifest validation errors carry context") {
  TempDir dir("manifest");
  const fs::path manifest = dir.path / "manifest.json";

  SUBCASE("empty subject list") {
    write_file(manifest, R"({"subjects": [], "sessions": ["1"], "conditions": ["Rest"],
      "n_rois": 1, "sampling_rate_hz": 250.0, "roi_names": ["a"], "trials": {}, "scores": {}})");
    CHECK_THROWS_WITH_AS(load_dataset(manifest.string()), doctest::Contains("empty subject"),
                         ValidationError);
  }

  SUBCASE("score out of range") {
    std::string text = kMinimalManifest;
    const auto pos = text.find("60.0");
    text.replace(pos, 4, "111.0");
    write_file(manifest, text);
    write_file(dir.path / "t0.csv", "1,2\n3,4\n");
    write_file(dir.path / "t1.csv", "1,2\n3,4\n");
    CHECK_THROWS_WITH_AS(load_dataset(manifest.string()), doctest::Contains("outside [0, 100]"),
                         ValidationError);
  }

  SUBCASE("missing trial file") {
    write_file(manifest, kMinimalManifest);
    write_file(dir.path / "t0.csv", "1,2\n3,4\n");
    CHECK_THROWS_WITH_AS(load_dataset(manifest.string()), doctest::Contains("t1.csv"),
                         ValidationError);
  }

  SUBCASE("row-count mismatch names the file") {
    write_file(manifest, kMinimalManifest);
    write_file(dir.path / "t0.csv", "1,2\n3,4\n");
    write_file(dir.path / "t1.csv", "1,2\n");  // 1 row, n_rois = 2
    const Dataset ds = load_dataset(manifest.string());
    CHECK_THROWS_WITH_AS(ds.trial(ds.trials()[1]), doctest::Contains("t1.csv"), ValidationError);
  }

  SUBCASE("non-finite sample") {
    write_file(manifest, kMinimalManifest);
    write_file(dir.path / "t0.csv", "1,2\n3,4\n");
    write_file(dir.path / "t1.csv", "1,inf\n3,4\n");
    const Dataset ds = load_dataset(manifest.string());
    CHECK_THROWS_AS(ds.trial(ds.trials()[1]), ValidationError);
  }

  SUBCASE("valid dataset loads deterministically") {
    write_file(manifest, kMinimalManifest);
    write_file(dir.path / "t0.csv", "1.5,2.25\n3,4e-2\n");
    write_file(dir.path / "t1.csv", "1,2\n3,4\n");
    const Dataset a = load_dataset(manifest.string());
    const Dataset b = load_dataset(manifest.string());
    CHECK(a.trial(a.trials()[0]).data == b.trial(b.trials()[0]).data);
    CHECK(a.trial(a.trials()[0]).data(0, 1) == 2.25);
    CHECK(a.score("S01", "1") == 60.0);
    CHECK(a.session_rank("1") == 0);
    CHECK_THROWS_AS(a.session_rank("9"), ValidationError);
  }
}

TEST_CASE("synthetic dataset round-trips bit-identically through the CSV layout") {
  TempDir dir("roundtrip");
  SynthConfig config;
  config.n_subjects = 2;
  config.n_sessions = 2;
  config.trials_per_cell = 2;
  config.n_rois = 3;
  config.n_samples = 60;
  config.mi_sigma_learner = {0.4, 0.6};
  config.event_rate = 0.01;
  config.seed = 99;
  const SynthResult result = generate_to_dir(config, dir.path.string());

  const Dataset loaded = load_dataset((dir.path / "manifest.json").string());
  REQUIRE(loaded.trials().size() == result.dataset.trials().size());
  for (std::size_t i = 0; i < loaded.trials().size(); ++i) {
    const auto& mem = result.dataset.trial(result.dataset.trials()[i]).data;
    const auto& disk = loaded.trial(loaded.trials()[i]).data;
    REQUIRE(mem.rows() == disk.rows());
    REQUIRE(mem.cols() == disk.cols());
    CHECK(mem == disk);  // bit-identical
  }
  CHECK(loaded.manifest().scores == result.dataset.manifest().scores);
}

TEST_CASE("filter_trials: label requirements and planted miss counts") {
  SynthConfig config;
  config.n_subjects = 2;
  config.n_sessions = 2;
  config.trials_per_cell = 10;
  config.n_rois = 3;
  config.n_samples = 40;
  config.mi_sigma_learner = {0.4, 0.6};
  config.event_rate = 0.01;
  config.seed = 7;

  SUBCASE("no labels: hit filter is an error, condition filter works") {
    config.miss_rate = 0.0;
    const SynthResult result = generate(config);
    CHECK_THROWS_AS(filter_trials(result.dataset, TrialFilter::Hit), ValidationError);
    const DatasetView mi = filter_trials(
        result.dataset, [](Condition c, const std::optional<TrialLabel>&) { return c == Condition::MI; },
        false);
    CHECK(mi.size() == result.dataset.trials().size() / 2);
    for (const TrialRef* t : mi.refs()) CHECK(t->condition == Condition::MI);
  }

  SUBCASE("planted 30% miss rate: view sizes match the generator's books") {
    config.miss_rate = 0.3;
    const SynthResult result = generate(config);
    const DatasetView hits = filter_trials(result.dataset, TrialFilter::Hit);
    const DatasetView misses = filter_trials(result.dataset, TrialFilter::Miss);
    CHECK(hits.size() + misses.size() == result.dataset.trials().size());

    long planted_misses = 0;
    for (const auto& [subject, sessions] : result.truth.miss_counts) {
      for (const auto& [session, conds] : sessions) {
        for (const auto& [cond, count] : conds) planted_misses += count;
      }
    }
    CHECK(static_cast<long>(misses.size()) == planted_misses);
  }
}

TEST_CASE("views reference the dataset without copying and iterate stably") {
  SynthConfig config;
  config.n_subjects = 1;
  config.n_sessions = 2;
  config.trials_per_cell = 3;
  config.n_rois = 2;
  config.n_samples = 30;
  config.mi_sigma_learner = {0.4, 0.6};
  config.event_rate = 0.02;
  const SynthResult result = generate(config);
  const DatasetView view = filter_trials(result.dataset, TrialFilter::All);
  REQUIRE(view.size() == result.dataset.trials().size());
  for (std::size_t i = 0; i < view.size(); ++i) {
    CHECK(view.refs()[i] == &result.dataset.trials()[i]);  // same objects, no copies
    const TrialRecording& a = result.dataset.trial(*view.refs()[i]);
    const TrialRecording& b = result.dataset.trial(*view.refs()[i]);
    CHECK(&a == &b);  // memoized
  }
}
