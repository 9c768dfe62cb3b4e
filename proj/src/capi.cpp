#include "avbci.h"

#include <filesystem>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "avbci/artifacts.hpp"
#include "avbci/synth.hpp"

using nlohmann::json;

namespace {

thread_local std::string g_last_error = "no error";

avbci_status fail(avbci_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

// Maps the core error taxonomy onto status codes.
template <typename Fn>
avbci_status guarded(Fn&& fn) {
  try {
    fn();
    return AVBCI_OK;
  } catch (const avbci::UpstreamError& e) {
    return fail(AVBCI_ERR_UPSTREAM, e.what());
  } catch (const avbci::NumericError& e) {
    return fail(AVBCI_ERR_NUMERIC, e.what());
  } catch (const avbci::ValidationError& e) {
    return fail(AVBCI_ERR_VALIDATION, e.what());
  } catch (const std::exception& e) {
    return fail(AVBCI_ERR_VALIDATION, e.what());
  }
}

json parse_options(const char* options_json) {
  if (options_json == nullptr || *options_json == '\0') return json::object();
  try {
    return json::parse(options_json);
  } catch (const json::exception& e) {
    throw avbci::ValidationError(std::string("options JSON: ") + e.what());
  }
}

}  // namespace

struct avbci_dataset {
  avbci::Dataset dataset;
};

struct avbci_features {
  avbci::FeatureTable table;
  json provenance_inputs;
};

extern "C" {

const char* avbci_version(void) { return avbci::kVersion; }

const char* avbci_last_error(void) { return g_last_error.c_str(); }

avbci_status avbci_simulate(const char* config_json, const char* out_dir) {
  if (!config_json || !out_dir) return fail(AVBCI_ERR_VALIDATION, "null argument");
  return guarded([&] {
    const avbci::SynthConfig config = avbci::synth_config_from_json(config_json);
    avbci::generate_to_dir(config, out_dir);
    json inputs;
    inputs["config"] = json::parse(avbci::synth_config_to_json(config));
    inputs["seed"] = config.seed;
    avbci::write_provenance(out_dir, "simulate", inputs);
  });
}

avbci_status avbci_dataset_open(const char* manifest_path, avbci_dataset** out) {
  if (!manifest_path || !out) return fail(AVBCI_ERR_VALIDATION, "null argument");
  *out = nullptr;
  return guarded([&] {
    auto handle = std::make_unique<avbci_dataset>();
    handle->dataset = avbci::load_dataset(manifest_path);
    *out = handle.release();
  });
}

void avbci_dataset_close(avbci_dataset* dataset) { delete dataset; }

int32_t avbci_dataset_n_subjects(const avbci_dataset* d) {
  return d ? static_cast<int32_t>(d->dataset.manifest().subjects.size()) : 0;
}

int32_t avbci_dataset_n_sessions(const avbci_dataset* d) {
  return d ? static_cast<int32_t>(d->dataset.manifest().sessions.size()) : 0;
}

int32_t avbci_dataset_n_rois(const avbci_dataset* d) {
  return d ? d->dataset.manifest().n_rois : 0;
}

double avbci_dataset_sampling_rate(const avbci_dataset* d) {
  return d ? d->dataset.manifest().sampling_rate_hz : 0.0;
}

avbci_status avbci_features_compute(const avbci_dataset* dataset, const char* options_json,
                                    avbci_features** out) {
  if (!dataset || !out) return fail(AVBCI_ERR_VALIDATION, "null argument");
  *out = nullptr;
  return guarded([&] {
    const json options = parse_options(options_json);
    avbci::FeatureRunOptions run;
    if (options.contains("grid")) {
      const auto& g = options.at("grid");
      if (g.is_string()) {
        run.grid.mode = g.get<std::string>();
        if (run.grid.mode != "canonical") {
          throw avbci::ValidationError("grid must be \"canonical\", a couple array, or grid_file");
        }
      } else if (g.is_array()) {
        run.grid.mode = "explicit";
        for (const auto& entry : g) {
          run.grid.explicit_couples.push_back(avbci::make_couple(
              entry.at("k").get<int>(), entry.at("min_dur_samples").get<int>(),
              dataset->dataset.manifest().sampling_rate_hz));
        }
      }
    }
    if (options.contains("grid_file")) {
      run.grid.mode = "file";
      run.grid.file = options.at("grid_file").get<std::string>();
    }
    if (options.contains("excursion")) {
      run.excursion = avbci::excursion_from_string(options.at("excursion").get<std::string>());
    }
    if (options.contains("filter")) {
      run.filter = avbci::filter_from_string(options.at("filter").get<std::string>());
    }
    if (options.contains("rois")) {
      const std::string rois = options.at("rois").get<std::string>();
      if (rois != "all") run.roi_selection_file = rois;
    }

    auto handle = std::make_unique<avbci_features>();
    handle->table = avbci::run_features(dataset->dataset, run);
    handle->provenance_inputs["dataset"] = dataset->dataset.root();
    handle->provenance_inputs["excursion"] = avbci::to_string(run.excursion);
    handle->provenance_inputs["filter"] = avbci::to_string(run.filter);
    handle->provenance_inputs["rois"] =
        run.roi_selection_file.empty() ? "all" : run.roi_selection_file;
    *out = handle.release();
  });
}

avbci_status avbci_features_write(const avbci_features* features, const char* out_dir) {
  if (!features || !out_dir) return fail(AVBCI_ERR_VALIDATION, "null argument");
  return guarded([&] { avbci::write_feature_table(features->table, out_dir, features->provenance_inputs); });
}

avbci_status avbci_features_open(const char* dir, avbci_features** out) {
  if (!dir || !out) return fail(AVBCI_ERR_VALIDATION, "null argument");
  *out = nullptr;
  return guarded([&] {
    auto handle = std::make_unique<avbci_features>();
    handle->table = avbci::load_feature_table(dir);
    handle->provenance_inputs["dataset"] = dir;
    *out = handle.release();
  });
}

void avbci_features_close(avbci_features* features) { delete features; }

int64_t avbci_features_n_rows(const avbci_features* features) {
  return features ? static_cast<int64_t>(features->table.rows().size()) : 0;
}

avbci_status avbci_stats_run(const avbci_dataset* dataset, const avbci_features* features,
                             const char* options_json, const char* out_path) {
  if (!dataset || !features || !out_path) return fail(AVBCI_ERR_VALIDATION, "null argument");
  return guarded([&] {
    const json options = parse_options(options_json);
    avbci::StatsOptions so;
    if (options.contains("filter")) {
      so.filter = avbci::filter_from_string(options.at("filter").get<std::string>());
    }
    if (options.contains("permutations")) so.n_permutations = options.at("permutations").get<int>();
    if (options.contains("seed")) so.seed = options.at("seed").get<std::uint64_t>();
    if (options.contains("perm_scheme")) {
      so.scheme = avbci::perm_scheme_from_string(options.at("perm_scheme").get<std::string>());
    }
    const json result = avbci::run_stats_battery(dataset->dataset, features->table, so);
    avbci::write_json(result, out_path);
  });
}

avbci_status avbci_rmcorr_run(const avbci_dataset* dataset, const avbci_features* features,
                              const char* out_path) {
  if (!dataset || !features || !out_path) return fail(AVBCI_ERR_VALIDATION, "null argument");
  return guarded([&] {
    const json result = avbci::run_rmcorr(dataset->dataset, features->table);
    avbci::write_json(result, out_path);
  });
}

avbci_status avbci_roi_select_run(const avbci_dataset* dataset, const avbci_features* features,
                                  const char* options_json, const char* out_path) {
  if (!dataset || !features || !out_path) return fail(AVBCI_ERR_VALIDATION, "null argument");
  return guarded([&] {
    const json options = parse_options(options_json);
    const double alpha = options.value("alpha", 0.05);
    const json result = avbci::run_roi_selection(dataset->dataset, features->table, alpha);
    avbci::write_json(result, out_path);
  });
}

avbci_status avbci_predict_run(const avbci_dataset* dataset, const avbci_features* features,
                               const char* options_json, const char* out_path) {
  if (!dataset || !features || !out_path) return fail(AVBCI_ERR_VALIDATION, "null argument");
  return guarded([&] {
    const json options = parse_options(options_json);
    avbci::PredictOptions po;
    if (options.contains("model")) {
      po.kind = avbci::model_kind_from_string(options.at("model").get<std::string>());
    }
    if (options.contains("control")) {
      const std::string control = options.at("control").get<std::string>();
      if (control == "shuffle") {
        po.shuffle_control = true;
      } else if (control != "none") {
        throw avbci::ValidationError("control must be none or shuffle");
      }
    }
    po.chance = options.value("chance", 57.0);
    if (options.contains("seed")) po.seed = options.at("seed").get<std::uint64_t>();
    if (options.contains("couple")) {
      const auto& c = options.at("couple");
      po.couple = avbci::make_couple(c.at("k").get<int>(), c.at("min_dur_samples").get<int>(),
                                     dataset->dataset.manifest().sampling_rate_hz);
    }
    const json result = avbci::run_predict(dataset->dataset, features->table, po);
    avbci::write_json(result, out_path);
  });
}

avbci_status avbci_report_run(const char* artifact_dir, const char* out_dir) {
  if (!artifact_dir || !out_dir) return fail(AVBCI_ERR_VALIDATION, "null argument");
  return guarded([&] {
    const json result = avbci::run_report(artifact_dir, out_dir);
    avbci::write_json(result, (std::filesystem::path(out_dir) / "report_index.json").string());
  });
}

}  // extern "C"
