#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hazardpipe/api/config.hpp"
#include "hazardpipe/api/service.hpp"
#include "hazardpipe/core/error.hpp"
#include "hazardpipe/detect/metrics.hpp"
#include "hazardpipe/sim/run.hpp"

extern char** environ;

namespace hp = hazardpipe;

namespace {

constexpr int kUsageError = 2;

hp::Settings load_settings(const std::string& path) {
  std::optional<std::filesystem::path> p;
  if (!path.empty() && path != "default") p = path;
  auto s = hp::Settings::load(p);
  s.apply_env(environ);
  return s;
}

int run_simulate(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& out_dir) {
  const auto settings = load_settings(config_path);
  auto cfg = hp::scenario_config(settings);
  (void)hp::service_config(settings);
  settings.check_consumed();
  if (seed) cfg.seed = *seed;
  const auto r = hp::sim::run_scenario(cfg);
  hp::sim::write_outputs(r, out_dir);
  std::printf("seed                 %llu\n", static_cast<unsigned long long>(cfg.seed));
  std::printf("box_precision        %.4f\n", r.metrics.box_precision);
  std::printf("recall               %.4f\n", r.metrics.recall);
  std::printf("map_50               %.4f\n", r.metrics.map_50);
  std::printf("map_50_95            %.4f\n", r.metrics.map_50_95);
  std::printf("agreement            %.4f (%zu decisions)\n", r.agreement, r.agreement_sample);
  std::printf("active_validators    %zu\n", r.active_validators);
  std::printf("mean_latency_s       %.1f\n", r.latency.end_to_end_mean_s);
  std::printf("latency_reduction    %.4f vs %.0f s baseline\n", r.latency.reduction_vs_baseline, r.latency.baseline_s);
  std::printf("sites                %d/%d recovered, %zu identified\n", r.recovery.recovered, r.recovery.planted,
              r.sites.size());
  std::printf("overhead_ms/image    mean %.3f max %.3f\n", r.overhead_ms_mean, r.overhead_ms_max);
  std::printf("replay_consistent    %s\n", r.replay_consistent ? "yes" : "no");
  std::printf("runtime_s            %.2f\n", r.runtime_s);
  std::printf("outputs              %s\n", out_dir.c_str());
  return 0;
}

int run_evaluate(const std::string& preds_path, const std::string& truth_path, bool as_json) {
  const auto preds = hp::read_predictions_jsonl(preds_path);
  const auto truth = hp::read_ground_truth_jsonl(truth_path);
  const auto m = hp::evaluate(preds, truth);
  if (as_json) {
    std::cout << nlohmann::json(m).dump(2) << "\n";
    return 0;
  }
  std::printf("images        %zu\n", m.n_images);
  std::printf("box_precision %.6f\n", m.box_precision);
  std::printf("recall        %.6f\n", m.recall);
  std::printf("map_50        %.6f\n", m.map_50);
  std::printf("map_50_95     %.6f\n", m.map_50_95);
  return 0;
}

hp::ServiceConfig service_from(const std::string& config_path, const std::string& data_dir) {
  const auto settings = load_settings(config_path);
  auto cfg = hp::service_config(settings);
  settings.check_consumed();
  if (!data_dir.empty()) cfg.server.data_dir = data_dir;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geotagged hazard report pipeline: service, simulation and evaluation tools", "hazardpipe"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "INI config file");
  app.add_option("--seed", seed, "RNG seed override");

  std::string data_dir;
  auto* serve = app.add_subcommand("serve", "run the HTTP service");
  serve->add_option("--data-dir", data_dir, "state directory");
  std::optional<int> port;
  serve->add_option("--port", port, "listen port");

  auto* simulate = app.add_subcommand("simulate", "run a synthetic pilot scenario");
  std::string scenario = "default";
  std::string out_dir = "sim-out";
  simulate->add_option("scenario", scenario, "config path or 'default'");
  simulate->add_option("--out", out_dir, "output directory");

  auto* evaluate = app.add_subcommand("evaluate", "score predictions against ground truth");
  std::string preds_path, truth_path;
  bool as_json = false;
  evaluate->add_option("preds", preds_path, "predictions JSONL")->required()->check(CLI::ExistingFile);
  evaluate->add_option("truth", truth_path, "ground truth JSONL")->required()->check(CLI::ExistingFile);
  evaluate->add_flag("--json", as_json, "print the full metrics report as JSON");

  auto* explain = app.add_subcommand("explain", "LIME explanation for a stored detection");
  std::string detection_id;
  explain->add_option("detection_id", detection_id)->required();
  explain->add_option("--data-dir", data_dir, "state directory");

  auto* heatmap = app.add_subcommand("export-heatmap", "GeoJSON heatmap of confirmed detections");
  std::string bbox, heatmap_out;
  std::optional<double> resolution;
  heatmap->add_option("bbox", bbox, "lat_min,lon_min,lat_max,lon_max")->required();
  heatmap->add_option("--resolution", resolution, "cell size in metres");
  heatmap->add_option("--data-dir", data_dir, "state directory");
  heatmap->add_option("--out", heatmap_out, "write to file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    if (!app.get_subcommands().empty() || e.get_exit_code() != 0) std::cerr << app.help();
    return kUsageError;
  }

  try {
    if (*simulate) {
      // --config supplies overrides when the positional is 'default'.
      return run_simulate(scenario == "default" ? config_path : scenario, seed, out_dir);
    }
    if (*evaluate) return run_evaluate(preds_path, truth_path, as_json);
    if (*serve) {
      auto cfg = service_from(config_path, data_dir);
      if (port) cfg.server.port = *port;
      if (seed) cfg.explain.seed = *seed;
      hp::ApiService service(cfg);
      hp::serve(service);
      return 0;
    }
    if (*explain) {
      auto cfg = service_from(config_path, data_dir);
      if (seed) cfg.explain.seed = *seed;
      hp::ApiService service(cfg);
      const auto submitted = service.post_lime(detection_id);
      if (submitted.status != 202) {
        std::cerr << submitted.body.dump() << "\n";
        return kUsageError;
      }
      service.drain();
      const auto job = service.get_job(submitted.body.at("job_id").get<std::string>());
      std::cout << job.body.dump(2) << "\n";
      return job.body.at("state") == "done" ? 0 : 1;
    }
    if (*heatmap) {
      const auto cfg = service_from(config_path, data_dir);
      hp::ApiService service(cfg);
      const auto r = service.get_heatmap(bbox, resolution);
      if (r.status != 200) {
        std::cerr << r.body.dump() << "\n";
        return kUsageError;
      }
      if (heatmap_out.empty()) {
        std::cout << r.body.dump(2) << "\n";
      } else {
        std::ofstream(heatmap_out) << r.body.dump(2) << "\n";
      }
      return 0;
    }
  } catch (const hp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "fatal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
