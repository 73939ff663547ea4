// Command-line front end: synthesize datasets, run the full uncertainty
// comparison pipeline, evaluate externally produced scores, and pretty-print
// stored reports.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "eauq/eauq.hpp"

namespace {

std::string default_output_dir() {
  if (const char* env = std::getenv("EAUQ_OUTPUT_DIR")) return env;
  return "eauq-out";
}

int run_synth(const eauq::SyntheticConfig& cfg, const std::string& out_csv,
              bool with_oracle) {
  eauq::cmd_synth(cfg, out_csv, with_oracle);
  std::cout << "wrote " << out_csv << " (" << cfg.n_examples << " examples, "
            << cfg.n_experts << " experts)\n";
  return 0;
}

int run_run(const std::string& config_path,
            const std::optional<std::string>& out_override,
            const std::optional<int>& jobs_override,
            const std::optional<double>& desk_scale_override) {
  eauq::RunConfig cfg = eauq::load_run_config(config_path);
  if (out_override) cfg.output_dir = *out_override;
  if (jobs_override) cfg.jobs = *jobs_override;
  if (desk_scale_override) cfg.desk_scale = *desk_scale_override;
  const eauq::RunOutputs outputs = eauq::cmd_run(cfg);
  eauq::print_aggregate_table(std::cout, outputs.aggregates);
  std::cout << "report: " << outputs.report_path.string() << '\n'
            << "curves: " << outputs.curves_dir.string() << '\n'
            << "plot:   " << outputs.svg_path.string() << '\n';
  return 0;
}

int run_evaluate(const std::string& scores_csv, const std::string& preds_csv,
                 const std::optional<std::string>& out_json) {
  const std::vector<eauq::MetricsReport> reports =
      eauq::cmd_evaluate(scores_csv, preds_csv);
  eauq::print_metrics_table(std::cout, reports);
  if (out_json) {
    nlohmann::ordered_json root;
    root["format"] = "eauq-metrics";
    root["version"] = 1;
    nlohmann::ordered_json entries = nlohmann::ordered_json::array();
    for (const eauq::MetricsReport& m : reports) {
      nlohmann::ordered_json entry;
      entry["estimator"] = m.estimator;
      entry["aac"] = m.aac;
      entry["accuracy_at_10pct_discard"] = m.acc_at_10pct_discard;
      if (m.fraction_to_99pct)
        entry["fraction_to_99pct"] = *m.fraction_to_99pct;
      else
        entry["fraction_to_99pct"] = nullptr;
      entry["n_test"] = m.n_test;
      entries.push_back(std::move(entry));
    }
    root["metrics"] = std::move(entries);
    eauq::write_file_atomic(*out_json, root.dump(2) + "\n");
    std::cout << "metrics: " << *out_json << '\n';
  }
  return 0;
}

int run_report(const std::string& report_path) {
  std::ifstream is(report_path);
  if (!is) throw eauq::IoError("cannot open report " + report_path);
  nlohmann::json root = nlohmann::json::parse(is);
  if (root.value("format", "") != "eauq-report")
    throw eauq::ParseError(report_path + " is not an eauq report");
  std::vector<eauq::MethodAggregate> aggregates;
  for (const auto& entry : root.at("aggregate")) {
    eauq::MethodAggregate agg;
    agg.method = entry.at("method").get<std::string>();
    agg.n_seeds = entry.at("n_seeds").get<int>();
    agg.mean_aac = entry.at("mean_aac").get<double>();
    agg.mean_acc_at_10pct =
        entry.at("mean_accuracy_at_10pct_discard").get<double>();
    if (!entry.at("mean_fraction_to_99pct").is_null())
      agg.mean_fraction_to_99pct =
          entry.at("mean_fraction_to_99pct").get<double>();
    agg.unreachable_count = entry.value("unreachable_seeds", 0);
    aggregates.push_back(std::move(agg));
  }
  eauq::print_aggregate_table(std::cout, aggregates);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Expert-aware uncertainty estimation toolkit"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand(
      "synth", "Generate a synthetic expert-annotated dataset as CSV");
  eauq::SyntheticConfig synth_cfg;
  std::string synth_out = "dataset.csv";
  bool with_oracle = false;
  synth->add_option("--n", synth_cfg.n_examples, "Number of examples")
      ->check(CLI::PositiveNumber);
  synth->add_option("--features", synth_cfg.n_features, "Feature dimension")
      ->check(CLI::PositiveNumber);
  synth->add_option("--experts", synth_cfg.n_experts,
                    "Number of simulated experts")
      ->check(CLI::PositiveNumber);
  synth->add_option("--noise-sd", synth_cfg.expert_noise_sd,
                    "Expert vote noise standard deviation")
      ->check(CLI::NonNegativeNumber);
  synth->add_option("--separation", synth_cfg.class_separation,
                    "Distance between the class centroids")
      ->check(CLI::PositiveNumber);
  synth->add_option("--band", synth_cfg.aleatoric_band_fraction,
                    "Fraction of examples drawn near the decision boundary")
      ->check(CLI::Range(0.0, 1.0));
  synth->add_option("--seed", synth_cfg.seed, "Generator seed");
  synth->add_option("--out", synth_out, "Output CSV path");
  synth->add_flag("--with-oracle", with_oracle,
                  "Include the true_p oracle column");

  // run
  auto* run = app.add_subcommand(
      "run", "Run the full comparison pipeline from a config file");
  std::string config_path;
  std::optional<std::string> out_override;
  std::optional<int> jobs_override;
  std::optional<double> desk_scale_override;
  run->add_option("--config", config_path, "JSON run configuration")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("--out", out_override,
                  "Output directory (overrides the config and EAUQ_OUTPUT_DIR)");
  run->add_option("--jobs", jobs_override, "Concurrent seeds")
      ->check(CLI::PositiveNumber);
  run->add_option("--desk-scale", desk_scale_override,
                  "Epoch budget multiplier for classification training")
      ->check(CLI::PositiveNumber);

  // evaluate
  auto* evaluate = app.add_subcommand(
      "evaluate", "Compute rejection metrics from scores and predictions CSVs");
  std::string scores_csv, preds_csv;
  std::optional<std::string> metrics_out;
  evaluate->add_option("--scores", scores_csv,
                       "CSV with example_id,estimator,value")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("--preds", preds_csv,
                       "CSV with example_id,predicted_prob,label")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("--out", metrics_out, "Optional JSON metrics output");

  // report
  auto* report = app.add_subcommand(
      "report", "Pretty-print the aggregate table of a stored run report");
  std::string report_path;
  report->add_option("--input", report_path, "report.json from a run")
      ->required()
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) return run_synth(synth_cfg, synth_out, with_oracle);
    if (run->parsed()) {
      if (!out_override) {
        if (const char* env = std::getenv("EAUQ_OUTPUT_DIR"))
          out_override = std::string(env);
      }
      return run_run(config_path, out_override, jobs_override,
                     desk_scale_override);
    }
    if (evaluate->parsed())
      return run_evaluate(scores_csv, preds_csv, metrics_out);
    if (report->parsed()) return run_report(report_path);
  } catch (const eauq::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const eauq::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const eauq::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
