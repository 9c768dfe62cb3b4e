// avbci command-line tool: simulate, features, stats, rmcorr, roi-select,
// predict, report, and the chained pipeline. All computation goes through
// the C API in avbci.h; this file only parses flags, shuttles JSON options,
// and maps statuses to exit codes (0 ok, 2 validation, 3 missing upstream,
// 4 numerical).

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "avbci.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int report_status(avbci_status status) {
  if (status != AVBCI_OK) {
    std::cerr << "error: " << avbci_last_error() << "\n";
  }
  return static_cast<int>(status);
}

std::string resolve_manifest(const std::string& dataset_arg) {
  fs::path p(dataset_arg);
  if (fs::is_directory(p)) p /= "manifest.json";
  return p.string();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error: cannot open " << path << "\n";
    std::exit(2);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// "k:samples" -> couple object
json parse_couple(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) {
    std::cerr << "error: --couple expects k:samples (e.g. 3:12)\n";
    std::exit(2);
  }
  try {
    json c;
    c["k"] = std::stoi(spec.substr(0, colon));
    c["min_dur_samples"] = std::stoi(spec.substr(colon + 1));
    return c;
  } catch (const std::exception&) {
    std::cerr << "error: --couple expects integers k:samples\n";
    std::exit(2);
  }
}

void write_command_provenance(const std::string& out_dir, const std::string& command,
                              const json& inputs) {
  json j;
  j["command"] = command;
  j["version"] = avbci_version();
  j["timestamp_unix"] = std::chrono::duration_cast<std::chrono::seconds>(
                            std::chrono::system_clock::now().time_since_epoch())
                            .count();
  j["inputs"] = inputs;
  std::ofstream out(fs::path(out_dir) / ("provenance_" + command + ".json"));
  out << j.dump(2) << "\n";
}

struct DatasetHandle {
  avbci_dataset* ptr = nullptr;
  ~DatasetHandle() { avbci_dataset_close(ptr); }
};

struct FeaturesHandle {
  avbci_features* ptr = nullptr;
  ~FeaturesHandle() { avbci_features_close(ptr); }
};

int open_dataset(const std::string& dataset_arg, DatasetHandle& handle) {
  const avbci_status st = avbci_dataset_open(resolve_manifest(dataset_arg).c_str(), &handle.ptr);
  return report_status(st);
}

int open_features(const std::string& dir, FeaturesHandle& handle) {
  const avbci_status st = avbci_features_open(dir.c_str(), &handle.ptr);
  return report_status(st);
}

json features_options(const std::string& grid, const std::vector<std::string>& couples,
                      const std::string& excursion, const std::string& filter,
                      const std::string& rois) {
  json options;
  if (!couples.empty()) {
    json arr = json::array();
    for (const auto& spec : couples) arr.push_back(parse_couple(spec));
    options["grid"] = arr;
  } else if (grid == "canonical") {
    options["grid"] = "canonical";
  } else {
    options["grid_file"] = grid;
  }
  options["excursion"] = excursion;
  options["filter"] = filter;
  if (rois != "all") {
    const std::string prefix = "selected:";
    if (rois.rfind(prefix, 0) != 0) {
      std::cerr << "error: --rois expects 'all' or 'selected:<selection.json>'\n";
      std::exit(2);
    }
    options["rois"] = rois.substr(prefix.size());
  }
  return options;
}

int run_features_cmd(const std::string& dataset, const json& options, const std::string& out) {
  DatasetHandle ds;
  if (int rc = open_dataset(dataset, ds)) return rc;
  FeaturesHandle features;
  avbci_status st = avbci_features_compute(ds.ptr, options.dump().c_str(), &features.ptr);
  if (st != AVBCI_OK) return report_status(st);
  fs::create_directories(out);
  st = avbci_features_write(features.ptr, out.c_str());
  if (st != AVBCI_OK) return report_status(st);
  std::cout << "features: " << avbci_features_n_rows(features.ptr) << " trial rows -> " << out
            << "\n";
  return 0;
}

// Picks the couple with the strongest significant repeated-measures
// correlation (min p, |r| as tie-break); falls back to the overall min p.
std::optional<json> best_couple_from_rmcorr(const std::string& rmcorr_path) {
  std::ifstream in(rmcorr_path);
  if (!in) return std::nullopt;
  json rm;
  in >> rm;
  const json* best = nullptr;
  double best_p = 2.0;
  double best_r = -1.0;
  for (const auto& entry : rm.at("results")) {
    if (!entry.contains("p")) continue;
    const double p = entry.at("p").get<double>();
    const double r = std::abs(entry.at("r").get<double>());
    const bool better = (p < 0.05 && best_p >= 0.05) ? true
                        : (p < 0.05 && best_p < 0.05) ? r > best_r
                                                      : (best_p >= 0.05 && p < best_p);
    if (!best || better) {
      best = &entry;
      best_p = p;
      best_r = r;
    }
  }
  if (!best) return std::nullopt;
  return std::make_optional<json>(best->at("couple"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"avbci — neuronal-avalanche biomarkers for BCI training analysis"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(avbci_version()));

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  std::string sim_config, sim_out;
  std::optional<std::uint64_t> sim_seed;
  sim->add_option("--config", sim_config, "synth config JSON file (defaults when omitted)");
  sim->add_option("--seed", sim_seed, "override the config seed");
  sim->add_option("--out", sim_out, "output dataset directory")->required();

  // features
  auto* feat = app.add_subcommand("features", "extract avalanche features");
  std::string feat_dataset, feat_grid = "canonical", feat_excursion = "abs", feat_filter = "all";
  std::string feat_rois = "all", feat_out;
  std::vector<std::string> feat_couples;
  feat->add_option("--dataset", feat_dataset, "dataset directory or manifest.json")->required();
  feat->add_option("--grid", feat_grid, "canonical | grid JSON file");
  feat->add_option("--couple", feat_couples, "restrict to couple k:samples (repeatable)");
  feat->add_option("--excursion", feat_excursion, "abs | positive");
  feat->add_option("--filter", feat_filter, "all | hit | miss");
  feat->add_option("--rois", feat_rois, "all | selected:<selection.json>");
  feat->add_option("--out", feat_out, "output directory")->required();

  // stats
  auto* stats = app.add_subcommand("stats", "run the statistical battery");
  std::string stats_dataset, stats_features, stats_filter = "all", stats_scheme = "free", stats_out;
  int stats_perms = 10000;
  std::uint64_t stats_seed = 1234;
  stats->add_option("--dataset", stats_dataset)->required();
  stats->add_option("--features", stats_features, "features directory")->required();
  stats->add_option("--filter", stats_filter, "all | hit | miss");
  stats->add_option("--permutations", stats_perms, "permutation count (default 10000)");
  stats->add_option("--seed", stats_seed);
  stats->add_option("--perm-scheme", stats_scheme, "free | within-subject");
  stats->add_option("--out", stats_out, "output directory")->required();

  // rmcorr
  auto* rmc = app.add_subcommand("rmcorr", "repeated-measures correlations with BCI score");
  std::string rmc_dataset, rmc_features, rmc_out;
  rmc->add_option("--dataset", rmc_dataset)->required();
  rmc->add_option("--features", rmc_features)->required();
  rmc->add_option("--out", rmc_out)->required();

  // roi-select
  auto* roi = app.add_subcommand("roi-select", "select condition-sensitive ROIs");
  std::string roi_dataset, roi_features, roi_out;
  double roi_alpha = 0.05;
  roi->add_option("--dataset", roi_dataset)->required();
  roi->add_option("--features", roi_features)->required();
  roi->add_option("--alpha", roi_alpha, "selection threshold (default 0.05)");
  roi->add_option("--out", roi_out)->required();

  // predict
  auto* pred = app.add_subcommand("predict", "train and evaluate next-session predictors");
  std::string pred_dataset, pred_features, pred_model = "lsvc", pred_control = "none", pred_out;
  std::string pred_couple;
  double pred_chance = 57.0;
  std::uint64_t pred_seed = 1234;
  pred->add_option("--dataset", pred_dataset)->required();
  pred->add_option("--features", pred_features)->required();
  pred->add_option("--model", pred_model, "lsvr | lsvc | svr | svc");
  pred->add_option("--control", pred_control, "none | shuffle");
  pred->add_option("--chance", pred_chance, "chance-level threshold (default 57)");
  pred->add_option("--seed", pred_seed);
  pred->add_option("--couple", pred_couple, "couple k:samples");
  pred->add_option("--out", pred_out)->required();

  // report
  auto* rep = app.add_subcommand("report", "summaries and plot-data grids from artifacts");
  std::string rep_in, rep_out;
  rep->add_option("--in", rep_in, "artifact directory")->required();
  rep->add_option("--out", rep_out, "report output directory")->required();

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "simulate -> features -> stats -> rmcorr -> "
                                              "roi-select -> predict -> report");
  std::string pipe_config, pipe_out, pipe_model = "lsvc", pipe_control = "shuffle";
  int pipe_perms = 10000;
  std::uint64_t pipe_seed = 1234;
  double pipe_alpha = 0.05, pipe_chance = 57.0;
  pipe->add_option("--config", pipe_config, "synth config JSON file");
  pipe->add_option("--out", pipe_out)->required();
  pipe->add_option("--permutations", pipe_perms);
  pipe->add_option("--seed", pipe_seed);
  pipe->add_option("--alpha", pipe_alpha);
  pipe->add_option("--chance", pipe_chance);
  pipe->add_option("--model", pipe_model, "lsvr | lsvc");
  pipe->add_option("--control", pipe_control, "none | shuffle");

  CLI11_PARSE(app, argc, argv);

  if (sim->parsed()) {
    json config = sim_config.empty() ? json::object() : json::parse(read_file(sim_config), nullptr, false);
    if (config.is_discarded()) {
      std::cerr << "error: " << sim_config << " is not valid JSON\n";
      return 2;
    }
    if (sim_seed) config["seed"] = *sim_seed;
    const avbci_status st = avbci_simulate(config.dump().c_str(), sim_out.c_str());
    if (st != AVBCI_OK) return report_status(st);
    std::cout << "simulate: dataset written to " << sim_out << "\n";
    return 0;
  }

  if (feat->parsed()) {
    return run_features_cmd(feat_dataset,
                            features_options(feat_grid, feat_couples, feat_excursion, feat_filter,
                                             feat_rois),
                            feat_out);
  }

  if (stats->parsed()) {
    DatasetHandle ds;
    if (int rc = open_dataset(stats_dataset, ds)) return rc;
    FeaturesHandle features;
    if (int rc = open_features(stats_features, features)) return rc;
    json options;
    options["filter"] = stats_filter;
    options["permutations"] = stats_perms;
    options["seed"] = stats_seed;
    options["perm_scheme"] = stats_scheme;
    fs::create_directories(stats_out);
    const std::string out_path = (fs::path(stats_out) / "stats.json").string();
    const avbci_status st =
        avbci_stats_run(ds.ptr, features.ptr, options.dump().c_str(), out_path.c_str());
    if (st != AVBCI_OK) return report_status(st);
    write_command_provenance(stats_out, "stats",
                             json{{"dataset", stats_dataset},
                                  {"features", stats_features},
                                  {"options", options}});
    std::cout << "stats: " << out_path << "\n";
    return 0;
  }

  if (rmc->parsed()) {
    DatasetHandle ds;
    if (int rc = open_dataset(rmc_dataset, ds)) return rc;
    FeaturesHandle features;
    if (int rc = open_features(rmc_features, features)) return rc;
    fs::create_directories(rmc_out);
    const std::string out_path = (fs::path(rmc_out) / "rmcorr.json").string();
    const avbci_status st = avbci_rmcorr_run(ds.ptr, features.ptr, out_path.c_str());
    if (st != AVBCI_OK) return report_status(st);
    write_command_provenance(rmc_out, "rmcorr",
                             json{{"dataset", rmc_dataset}, {"features", rmc_features}});
    std::cout << "rmcorr: " << out_path << "\n";
    return 0;
  }

  if (roi->parsed()) {
    DatasetHandle ds;
    if (int rc = open_dataset(roi_dataset, ds)) return rc;
    FeaturesHandle features;
    if (int rc = open_features(roi_features, features)) return rc;
    json options;
    options["alpha"] = roi_alpha;
    fs::create_directories(roi_out);
    const std::string out_path = (fs::path(roi_out) / "selection.json").string();
    const avbci_status st =
        avbci_roi_select_run(ds.ptr, features.ptr, options.dump().c_str(), out_path.c_str());
    if (st != AVBCI_OK) return report_status(st);
    write_command_provenance(roi_out, "roi-select",
                             json{{"dataset", roi_dataset},
                                  {"features", roi_features},
                                  {"alpha", roi_alpha}});
    std::cout << "roi-select: " << out_path << "\n";
    return 0;
  }

  if (pred->parsed()) {
    DatasetHandle ds;
    if (int rc = open_dataset(pred_dataset, ds)) return rc;
    FeaturesHandle features;
    if (int rc = open_features(pred_features, features)) return rc;
    json options;
    options["model"] = pred_model;
    options["control"] = pred_control;
    options["chance"] = pred_chance;
    options["seed"] = pred_seed;
    if (!pred_couple.empty()) options["couple"] = parse_couple(pred_couple);
    fs::create_directories(pred_out);
    const std::string out_path = (fs::path(pred_out) / "predictions.json").string();
    const avbci_status st =
        avbci_predict_run(ds.ptr, features.ptr, options.dump().c_str(), out_path.c_str());
    if (st != AVBCI_OK) return report_status(st);
    write_command_provenance(pred_out, "predict",
                             json{{"dataset", pred_dataset},
                                  {"features", pred_features},
                                  {"options", options}});
    std::cout << "predict: " << out_path << "\n";
    return 0;
  }

  if (rep->parsed()) {
    const avbci_status st = avbci_report_run(rep_in.c_str(), rep_out.c_str());
    if (st != AVBCI_OK) return report_status(st);
    write_command_provenance(rep_out, "report", json{{"in", rep_in}});
    std::cout << "report: " << rep_out << "\n";
    return 0;
  }

  if (pipe->parsed()) {
    const std::string dataset_dir = (fs::path(pipe_out) / "dataset").string();
    const std::string analysis_dir = (fs::path(pipe_out) / "analysis").string();

    json config = pipe_config.empty() ? json::object()
                                      : json::parse(read_file(pipe_config), nullptr, false);
    if (config.is_discarded()) {
      std::cerr << "error: " << pipe_config << " is not valid JSON\n";
      return 2;
    }
    if (!config.contains("seed")) config["seed"] = pipe_seed;
    std::cout << "pipeline: simulating -> " << dataset_dir << "\n";
    avbci_status st = avbci_simulate(config.dump().c_str(), dataset_dir.c_str());
    if (st != AVBCI_OK) return report_status(st);

    DatasetHandle ds;
    if (int rc = open_dataset(dataset_dir, ds)) return rc;

    std::cout << "pipeline: extracting features\n";
    FeaturesHandle features;
    json fopt;
    fopt["grid"] = "canonical";
    st = avbci_features_compute(ds.ptr, fopt.dump().c_str(), &features.ptr);
    if (st != AVBCI_OK) return report_status(st);
    fs::create_directories(analysis_dir);
    st = avbci_features_write(features.ptr, analysis_dir.c_str());
    if (st != AVBCI_OK) return report_status(st);

    std::cout << "pipeline: stats battery\n";
    json sopt;
    sopt["permutations"] = pipe_perms;
    sopt["seed"] = pipe_seed;
    st = avbci_stats_run(ds.ptr, features.ptr, sopt.dump().c_str(),
                         (fs::path(analysis_dir) / "stats.json").string().c_str());
    if (st != AVBCI_OK) return report_status(st);

    std::cout << "pipeline: repeated-measures correlations\n";
    const std::string rmcorr_path = (fs::path(analysis_dir) / "rmcorr.json").string();
    st = avbci_rmcorr_run(ds.ptr, features.ptr, rmcorr_path.c_str());
    if (st != AVBCI_OK) return report_status(st);

    std::cout << "pipeline: ROI selection\n";
    json ropt;
    ropt["alpha"] = pipe_alpha;
    st = avbci_roi_select_run(ds.ptr, features.ptr, ropt.dump().c_str(),
                              (fs::path(analysis_dir) / "selection.json").string().c_str());
    if (st != AVBCI_OK) return report_status(st);

    const auto couple = best_couple_from_rmcorr(rmcorr_path);
    json popt;
    popt["model"] = pipe_model;
    popt["control"] = pipe_control;
    popt["chance"] = pipe_chance;
    popt["seed"] = pipe_seed;
    if (couple) {
      popt["couple"] = *couple;
      std::cout << "pipeline: predicting with couple k" << (*couple)["k"] << ":d"
                << (*couple)["min_dur_samples"] << "\n";
    } else {
      std::cout << "pipeline: no rmcorr winner; predict uses the table's single couple\n";
    }
    st = avbci_predict_run(ds.ptr, features.ptr, popt.dump().c_str(),
                           (fs::path(analysis_dir) / "predictions.json").string().c_str());
    if (st != AVBCI_OK) return report_status(st);

    std::cout << "pipeline: report\n";
    st = avbci_report_run(analysis_dir.c_str(), (fs::path(pipe_out) / "report").string().c_str());
    if (st != AVBCI_OK) return report_status(st);

    write_command_provenance(pipe_out, "pipeline",
                             json{{"config", config}, {"seed", pipe_seed}});
    std::cout << "pipeline: done -> " << pipe_out << "\n";
    return 0;
  }

  return 0;
}
