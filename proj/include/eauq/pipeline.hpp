#pragma once

// End-to-end experiment pipeline behind the command-line tool: data loading
// or synthesis, repeated seeded runs (fixed test pool), ensemble building,
// per-method scoring, metric aggregation, and report/plot emission. All
// randomness flows from one master seed through named substreams, so adding
// a method never perturbs the results of another.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "eauq/data.hpp"
#include "eauq/errors.hpp"
#include "eauq/estimators.hpp"
#include "eauq/eval.hpp"
#include "eauq/mlp.hpp"

namespace eauq {

inline constexpr int kDefaultSeeds = 20;
inline constexpr double kDefaultDeskScale = 0.125;

struct RunConfig {
  // Exactly one data source.
  std::optional<SyntheticConfig> synthetic;
  std::optional<std::string> csv_path;

  double train_fraction = 0.1;
  double val_fraction = 0.1;
  double test_fraction = 0.8;

  MlpSpec model;
  TrainConfig train;                              // classification training
  TrainConfig finetune = default_finetune_config();

  int k_ce = kDefaultCeMembers;
  int mcmc_keep = kDefaultMcmcKeep;
  int mcmc_interval = kDefaultMcmcInterval;
  int dropout_passes = kDefaultDropoutPasses;
  double dropout_rate = kDefaultDropoutRate;

  std::vector<Method> methods =
      std::vector<Method>(comparison_methods().begin(), comparison_methods().end());
  int n_seeds = kDefaultSeeds;
  std::uint64_t master_seed = 0;

  // Epoch budget multiplier for classification training; the stock 800-epoch
  // schedule is far more than a small MLP needs.
  double desk_scale = kDefaultDeskScale;

  // Ablation only: min-max normalize the two components of additive methods
  // across the test set before adding them.
  bool normalized_sum = false;
  bool save_ensembles = false;

  std::string output_dir = "eauq-out";
  int jobs = 1;

  int effective_train_epochs() const {
    return std::max(1, static_cast<int>(std::llround(train.epochs * desk_scale)));
  }

  // The snapshot run needs at least interval*keep epochs regardless of how
  // far the desk scale shrinks the budget.
  int effective_mcmc_epochs() const {
    return std::max(effective_train_epochs(), mcmc_interval * mcmc_keep);
  }

  void validate() const {
    if (synthetic.has_value() == csv_path.has_value())
      throw ConfigError("RunConfig: specify exactly one data source "
                        "(synthetic or csv)");
    if (synthetic) synthetic->validate();
    if (methods.empty()) throw ConfigError("RunConfig: methods must be non-empty");
    if (k_ce < 2) throw ConfigError("RunConfig: k_ce must be >= 2");
    if (mcmc_keep < 2) throw ConfigError("RunConfig: mcmc_keep must be >= 2");
    if (mcmc_interval < 1) throw ConfigError("RunConfig: mcmc_interval must be >= 1");
    if (dropout_passes < 2) throw ConfigError("RunConfig: dropout_passes must be >= 2");
    if (n_seeds < 1) throw ConfigError("RunConfig: n_seeds must be >= 1");
    if (!(desk_scale > 0.0)) throw ConfigError("RunConfig: desk_scale must be positive");
    if (jobs < 1) throw ConfigError("RunConfig: jobs must be >= 1");
    if (output_dir.empty()) throw ConfigError("RunConfig: output_dir must be set");
    train.validate();
    finetune.validate();
    SplitSpec probe{train_fraction, val_fraction, test_fraction, 0, 0};
    probe.validate();
    if (csv_path && !std::filesystem::exists(*csv_path))
      throw ConfigError("RunConfig: csv file does not exist: " + *csv_path);
  }
};

// --- config file (JSON) ------------------------------------------------------

namespace detail {

inline void check_keys(const nlohmann::json& obj, const char* where,
                       std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (key == a) known = true;
    if (!known)
      throw ConfigError(std::string("config: unknown key '") + key + "' in " +
                        where);
  }
}

inline LossKind parse_loss(const std::string& name) {
  if (name == "binary_cross_entropy") return LossKind::BinaryCrossEntropy;
  if (name == "mean_squared_error") return LossKind::MeanSquaredError;
  throw ConfigError("config: unknown loss '" + name + "'");
}

inline LrSchedule parse_schedule(const std::string& name) {
  if (name == "constant") return LrSchedule::Constant;
  if (name == "linear_decay") return LrSchedule::LinearDecay;
  if (name == "exponential_decay") return LrSchedule::ExponentialDecay;
  throw ConfigError("config: unknown lr schedule '" + name + "'");
}

inline void parse_train_section(const nlohmann::json& obj, const char* where,
                                TrainConfig& cfg) {
  check_keys(obj, where,
             {"epochs", "initial_lr", "lr_schedule", "lr_decay_factor",
              "weight_decay", "batch_size", "loss"});
  cfg.epochs = obj.value("epochs", cfg.epochs);
  cfg.initial_lr = obj.value("initial_lr", cfg.initial_lr);
  if (obj.contains("lr_schedule"))
    cfg.lr_schedule = parse_schedule(obj.at("lr_schedule").get<std::string>());
  cfg.lr_decay_factor = obj.value("lr_decay_factor", cfg.lr_decay_factor);
  cfg.weight_decay = obj.value("weight_decay", cfg.weight_decay);
  cfg.batch_size = obj.value("batch_size", cfg.batch_size);
  if (obj.contains("loss"))
    cfg.loss = parse_loss(obj.at("loss").get<std::string>());
}

}  // namespace detail

inline SyntheticConfig parse_synthetic_config(const nlohmann::json& obj) {
  detail::check_keys(obj, "data.synthetic",
                     {"n_examples", "n_features", "class_separation",
                      "aleatoric_band_fraction", "n_experts", "expert_noise_sd",
                      "seed"});
  SyntheticConfig cfg;
  cfg.n_examples = obj.value("n_examples", cfg.n_examples);
  cfg.n_features = obj.value("n_features", cfg.n_features);
  cfg.class_separation = obj.value("class_separation", cfg.class_separation);
  cfg.aleatoric_band_fraction =
      obj.value("aleatoric_band_fraction", cfg.aleatoric_band_fraction);
  cfg.n_experts = obj.value("n_experts", cfg.n_experts);
  cfg.expert_noise_sd = obj.value("expert_noise_sd", cfg.expert_noise_sd);
  cfg.seed = obj.value("seed", cfg.seed);
  return cfg;
}

inline RunConfig parse_run_config(const nlohmann::json& root) {
  detail::check_keys(root, "config",
                     {"data", "split", "model", "train", "finetune",
                      "ensembles", "methods", "n_seeds", "master_seed",
                      "desk_scale", "normalized_sum", "save_ensembles",
                      "output_dir", "jobs"});
  RunConfig cfg;
  if (!root.contains("data"))
    throw ConfigError("config: missing 'data' section");
  const auto& data = root.at("data");
  detail::check_keys(data, "data", {"synthetic", "csv"});
  if (data.contains("synthetic"))
    cfg.synthetic = parse_synthetic_config(data.at("synthetic"));
  if (data.contains("csv")) cfg.csv_path = data.at("csv").get<std::string>();

  if (root.contains("split")) {
    const auto& split = root.at("split");
    detail::check_keys(split, "split",
                       {"train_fraction", "val_fraction", "test_fraction"});
    cfg.train_fraction = split.value("train_fraction", cfg.train_fraction);
    cfg.val_fraction = split.value("val_fraction", cfg.val_fraction);
    cfg.test_fraction = split.value("test_fraction", cfg.test_fraction);
  }
  if (root.contains("model")) {
    const auto& model = root.at("model");
    detail::check_keys(model, "model", {"hidden_layers", "dropout_rate"});
    if (model.contains("hidden_layers"))
      cfg.model.hidden_layers = model.at("hidden_layers").get<std::vector<int>>();
    cfg.model.dropout_rate = model.value("dropout_rate", cfg.model.dropout_rate);
    cfg.dropout_rate = cfg.model.dropout_rate;
  }
  if (root.contains("train"))
    detail::parse_train_section(root.at("train"), "train", cfg.train);
  if (root.contains("finetune"))
    detail::parse_train_section(root.at("finetune"), "finetune", cfg.finetune);
  if (root.contains("ensembles")) {
    const auto& ens = root.at("ensembles");
    detail::check_keys(ens, "ensembles",
                       {"k_ce", "mcmc_keep", "mcmc_interval", "dropout_passes",
                        "dropout_rate"});
    cfg.k_ce = ens.value("k_ce", cfg.k_ce);
    cfg.mcmc_keep = ens.value("mcmc_keep", cfg.mcmc_keep);
    cfg.mcmc_interval = ens.value("mcmc_interval", cfg.mcmc_interval);
    cfg.dropout_passes = ens.value("dropout_passes", cfg.dropout_passes);
    cfg.dropout_rate = ens.value("dropout_rate", cfg.dropout_rate);
  }
  if (root.contains("methods")) {
    cfg.methods.clear();
    for (const auto& name : root.at("methods")) {
      const auto m = parse_method(name.get<std::string>());
      if (!m)
        throw ConfigError("config: unknown method '" +
                          name.get<std::string>() + "'");
      cfg.methods.push_back(*m);
    }
  }
  cfg.n_seeds = root.value("n_seeds", cfg.n_seeds);
  cfg.master_seed = root.value("master_seed", cfg.master_seed);
  cfg.desk_scale = root.value("desk_scale", cfg.desk_scale);
  cfg.normalized_sum = root.value("normalized_sum", cfg.normalized_sum);
  cfg.save_ensembles = root.value("save_ensembles", cfg.save_ensembles);
  cfg.output_dir = root.value("output_dir", cfg.output_dir);
  cfg.jobs = root.value("jobs", cfg.jobs);
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file " + path.string());
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("config file " + path.string() + ": " + e.what());
  }
  return parse_run_config(root);
}

inline nlohmann::ordered_json config_echo(const RunConfig& cfg) {
  nlohmann::ordered_json echo;
  if (cfg.synthetic) {
    const SyntheticConfig& s = *cfg.synthetic;
    echo["data"]["synthetic"] = {{"n_examples", s.n_examples},
                                 {"n_features", s.n_features},
                                 {"class_separation", s.class_separation},
                                 {"aleatoric_band_fraction", s.aleatoric_band_fraction},
                                 {"n_experts", s.n_experts},
                                 {"expert_noise_sd", s.expert_noise_sd},
                                 {"seed", s.seed}};
  } else {
    echo["data"]["csv"] = cfg.csv_path.value_or("");
  }
  echo["split"] = {{"train_fraction", cfg.train_fraction},
                   {"val_fraction", cfg.val_fraction},
                   {"test_fraction", cfg.test_fraction}};
  echo["model"] = {{"hidden_layers", cfg.model.hidden_layers},
                   {"dropout_rate", cfg.model.dropout_rate}};
  auto train_echo = [](const TrainConfig& t) {
    return nlohmann::ordered_json{{"epochs", t.epochs},
                                  {"initial_lr", t.initial_lr},
                                  {"lr_schedule", schedule_name(t.lr_schedule)},
                                  {"lr_decay_factor", t.lr_decay_factor},
                                  {"weight_decay", t.weight_decay},
                                  {"batch_size", t.batch_size},
                                  {"loss", loss_name(t.loss)}};
  };
  echo["train"] = train_echo(cfg.train);
  echo["train"]["effective_epochs"] = cfg.effective_train_epochs();
  echo["finetune"] = train_echo(cfg.finetune);
  echo["ensembles"] = {{"k_ce", cfg.k_ce},
                       {"mcmc_keep", cfg.mcmc_keep},
                       {"mcmc_interval", cfg.mcmc_interval},
                       {"mcmc_effective_epochs", cfg.effective_mcmc_epochs()},
                       {"dropout_passes", cfg.dropout_passes},
                       {"dropout_rate", cfg.dropout_rate}};
  std::vector<std::string> method_names;
  for (Method m : cfg.methods) method_names.push_back(method_name(m));
  echo["methods"] = method_names;
  echo["n_seeds"] = cfg.n_seeds;
  echo["master_seed"] = cfg.master_seed;
  echo["desk_scale"] = cfg.desk_scale;
  echo["normalized_sum"] = cfg.normalized_sum;
  echo["save_ensembles"] = cfg.save_ensembles;
  echo["output_dir"] = cfg.output_dir;
  return echo;
}

// --- single-seed execution ---------------------------------------------------

struct MethodSeedResult {
  Method method = Method::CeStd;
  SeedResult result;
  std::vector<double> scores;  // aligned with the test example order
};

struct SeedOutcome {
  int seed_index = 0;
  std::vector<ScoredPrediction> predictions;  // CE-mean outputs on the test set
  std::vector<MethodSeedResult> per_method;
  Ensemble ce;
  std::optional<Ensemble> eae;
  std::optional<Ensemble> mcmc;
};

namespace detail {

inline void check_vote_requirements(const Dataset& data,
                                    const std::vector<Method>& methods,
                                    const char* scope) {
  for (Method m : methods) {
    if ((method_needs_votes_at_inference(m) || method_needs_expert_training(m)) &&
        !data.all_have_votes())
      throw InputError("method " + method_name(m) +
                       " needs expert votes, but the " + scope +
                       " dataset has examples without votes");
    if (m == Method::OracleMp && !data.all_have_oracle())
      throw InputError("method ORACLE_MP needs true_positive_prob, which the " +
                       std::string(scope) + " dataset does not carry");
  }
}

// Min-max normalization to [0,1]; constant vectors collapse to zero.
inline void minmax_normalize(std::vector<double>& values) {
  double lo = values[0], hi = values[0];
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double range = hi - lo;
  for (double& v : values) v = range > 0.0 ? (v - lo) / range : 0.0;
}

}  // namespace detail

inline SeedOutcome run_single_seed(const Dataset& full, const RunConfig& cfg,
                                   int seed_index) {
  detail::check_vote_requirements(full, cfg.methods, "input");

  SplitSpec spec;
  spec.train_fraction = cfg.train_fraction;
  spec.val_fraction = cfg.val_fraction;
  spec.test_fraction = cfg.test_fraction;
  spec.master_seed = derive_seed(cfg.master_seed, "split");
  spec.run_seed = static_cast<std::uint64_t>(seed_index);
  SplitResult parts = split(full, spec);

  Dataset pool;
  pool.examples.reserve(parts.train.size() + parts.val.size());
  pool.examples.insert(pool.examples.end(), parts.train.examples.begin(),
                       parts.train.examples.end());
  pool.examples.insert(pool.examples.end(), parts.val.examples.begin(),
                       parts.val.examples.end());

  const std::uint64_t seed_base =
      derive_seed(cfg.master_seed, "seed", static_cast<std::uint64_t>(seed_index));

  bool need_eae = false, need_ean = false, need_mcmc = false;
  for (Method m : cfg.methods) {
    if (method_uses_full_eae(m)) need_eae = true;
    if (m == Method::EanMpPlusCeStd) need_ean = true;
    if (m == Method::Mcmc) need_mcmc = true;
  }

  SeedOutcome outcome;
  outcome.seed_index = seed_index;

  // The classification ensemble is the deployed classifier; it is always
  // built and its mean output supplies the predictions for every method.
  TrainConfig train_cfg = cfg.train;
  train_cfg.epochs = cfg.effective_train_epochs();
  const double member_fraction =
      cfg.train_fraction / (cfg.train_fraction + cfg.val_fraction);
  outcome.ce = build_ce(to_classification_targets(pool), member_fraction,
                        cfg.model, train_cfg, cfg.k_ce,
                        derive_seed(seed_base, "ce"));

  std::optional<MlpModel> ean;
  if (need_eae || need_ean) {
    TrainConfig ft = cfg.finetune;
    ft.seed = derive_seed(seed_base, "eae-ft");
    if (need_eae) {
      outcome.eae = build_eae(outcome.ce, pool, ft);
      ean = outcome.eae->members[0];
    } else {
      // Only the single designated net (CE member 0) is fine-tuned; the seed
      // matches what build_eae would give that member.
      TrainConfig member_cfg = ft;
      member_cfg.seed = derive_seed(ft.seed, "eae-member", 0);
      ean = finetune_to_experts(outcome.ce.members[0],
                                to_expert_mean_targets(pool), member_cfg);
    }
  }

  if (need_mcmc) {
    TrainConfig mcmc_cfg = cfg.train;
    mcmc_cfg.epochs = cfg.effective_mcmc_epochs();
    outcome.mcmc = build_mcmc_ensemble(to_classification_targets(parts.train),
                                       cfg.model, mcmc_cfg, cfg.mcmc_interval,
                                       cfg.mcmc_keep,
                                       derive_seed(seed_base, "mcmc"));
  }

  const Dataset& test = parts.test;
  outcome.predictions.reserve(test.size());
  for (const Example& ex : test.examples)
    outcome.predictions.push_back(
        {ex.id, ensemble_mean(outcome.ce, ex.features), ex.label, 0.0});

  std::vector<std::string> test_ids;
  test_ids.reserve(test.size());
  for (const Example& ex : test.examples) test_ids.push_back(ex.id);
  const std::uint64_t digest = test_pool_digest(test_ids);

  const std::uint64_t dropout_seed = derive_seed(seed_base, "mc-dropout");
  auto make_context = [&](const Example& ex) {
    ScoreContext ctx;
    ctx.ce = &outcome.ce;
    ctx.eae = outcome.eae ? &*outcome.eae : nullptr;
    ctx.mcmc = outcome.mcmc ? &*outcome.mcmc : nullptr;
    ctx.ean = ean ? &*ean : nullptr;
    ctx.features = ex.features;
    ctx.expert_votes = ex.expert_votes ? &*ex.expert_votes : nullptr;
    ctx.oracle_positive_prob = ex.true_positive_prob;
    ctx.dropout_passes = cfg.dropout_passes;
    ctx.dropout_rate = cfg.dropout_rate;
    ctx.dropout_seed = dropout_seed;
    ctx.example_id = ex.id;
    return ctx;
  };

  for (Method m : cfg.methods) {
    MethodSeedResult method_result;
    method_result.method = m;
    method_result.scores.reserve(test.size());
    if (cfg.normalized_sum) {
      // Ablation: components of additive methods are min-max normalized
      // over the test set before the addition.
      std::vector<double> first, second;
      bool is_sum = false;
      for (const Example& ex : test.examples) {
        const ScoreContext ctx = make_context(ex);
        if (auto parts2 = estimate_sum_components(m, ctx)) {
          is_sum = true;
          first.push_back(parts2->first.value);
          second.push_back(parts2->second.value);
        } else {
          method_result.scores.push_back(estimate(m, ctx).value);
        }
      }
      if (is_sum) {
        detail::minmax_normalize(first);
        detail::minmax_normalize(second);
        for (std::size_t i = 0; i < first.size(); ++i)
          method_result.scores.push_back(first[i] + second[i]);
      }
    } else {
      for (const Example& ex : test.examples)
        method_result.scores.push_back(estimate(m, make_context(ex)).value);
    }

    std::vector<ScoredPrediction> scored = outcome.predictions;
    for (std::size_t i = 0; i < scored.size(); ++i)
      scored[i].uncertainty = method_result.scores[i];
    RejectionCurve curve = rejection_curve(std::move(scored));
    method_result.result.metrics =
        compute_metrics(curve, method_name(m),
                        static_cast<std::uint64_t>(seed_index));
    method_result.result.curve = std::move(curve);
    method_result.result.test_digest = digest;
    outcome.per_method.push_back(std::move(method_result));
  }
  return outcome;
}

// --- file helpers --------------------------------------------------------------

inline void write_file_atomic(const std::filesystem::path& path,
                              const std::string& content) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
    os << content;
    if (!os) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string predictions_to_csv(const std::vector<ScoredPrediction>& preds) {
  std::string out = "example_id,predicted_prob,label\n";
  for (const ScoredPrediction& p : preds) {
    out += p.example_id;
    out += ',';
    out += format_double(p.predicted_prob);
    out += ',';
    out += std::to_string(p.label);
    out += '\n';
  }
  return out;
}

// --- run command ---------------------------------------------------------------

struct RunOutputs {
  std::filesystem::path report_path;
  std::filesystem::path svg_path;
  std::filesystem::path curves_dir;
  std::vector<MethodAggregate> aggregates;
};

namespace detail {

inline std::string method_file_stem(const std::string& method) {
  std::string stem = method;
  for (char& c : stem)
    if (c == '+') c = '_';
  return stem;
}

}  // namespace detail

// Writes a fixed-width comparison table of the aggregates.
inline void print_aggregate_table(std::ostream& os,
                                  const std::vector<MethodAggregate>& aggregates) {
  char line[160];
  std::snprintf(line, sizeof(line), "%-16s %6s %12s %16s %16s", "method",
                "seeds", "mean AAC", "acc@10% discard", "frac to 99% acc");
  os << line << '\n';
  for (const MethodAggregate& agg : aggregates) {
    std::string frac = "unreachable";
    if (agg.mean_fraction_to_99pct) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.4f", *agg.mean_fraction_to_99pct);
      frac = buf;
      if (agg.unreachable_count > 0)
        frac += " (" + std::to_string(agg.unreachable_count) + " unreachable)";
    }
    std::snprintf(line, sizeof(line), "%-16s %6d %12.6f %16.4f %16s",
                  agg.method.c_str(), agg.n_seeds, agg.mean_aac,
                  agg.mean_acc_at_10pct, frac.c_str());
    os << line << '\n';
  }
}

inline nlohmann::ordered_json report_json(
    const RunConfig& cfg, const std::vector<SeedOutcome>& outcomes,
    const std::vector<MethodAggregate>& aggregates) {
  nlohmann::ordered_json report;
  report["format"] = "eauq-report";
  report["version"] = 1;
  report["config"] = config_echo(cfg);
  nlohmann::ordered_json per_seed = nlohmann::ordered_json::array();
  for (const SeedOutcome& outcome : outcomes) {
    for (const MethodSeedResult& mr : outcome.per_method) {
      const MetricsReport& m = mr.result.metrics;
      nlohmann::ordered_json entry;
      entry["seed"] = m.seed;
      entry["method"] = m.estimator;
      entry["aac"] = m.aac;
      entry["accuracy_at_10pct_discard"] = m.acc_at_10pct_discard;
      if (m.fraction_to_99pct)
        entry["fraction_to_99pct"] = *m.fraction_to_99pct;
      else
        entry["fraction_to_99pct"] = nullptr;
      entry["n_test"] = m.n_test;
      per_seed.push_back(std::move(entry));
    }
  }
  report["per_seed"] = std::move(per_seed);
  nlohmann::ordered_json agg_json = nlohmann::ordered_json::array();
  for (const MethodAggregate& agg : aggregates) {
    nlohmann::ordered_json entry;
    entry["method"] = agg.method;
    entry["n_seeds"] = agg.n_seeds;
    entry["mean_aac"] = agg.mean_aac;
    entry["mean_accuracy_at_10pct_discard"] = agg.mean_acc_at_10pct;
    if (agg.mean_fraction_to_99pct)
      entry["mean_fraction_to_99pct"] = *agg.mean_fraction_to_99pct;
    else
      entry["mean_fraction_to_99pct"] = nullptr;
    entry["unreachable_seeds"] = agg.unreachable_count;
    agg_json.push_back(std::move(entry));
  }
  report["aggregate"] = std::move(agg_json);
  return report;
}

inline Dataset load_run_dataset(const RunConfig& cfg) {
  if (cfg.synthetic) return synthesize(*cfg.synthetic);
  return load_csv(std::filesystem::path(*cfg.csv_path));
}

inline std::vector<SeedOutcome> run_all_seeds(const Dataset& data,
                                              const RunConfig& cfg) {
  std::vector<SeedOutcome> outcomes(static_cast<std::size_t>(cfg.n_seeds));
  const int workers = std::min(cfg.jobs, cfg.n_seeds);
  if (workers <= 1) {
    for (int r = 0; r < cfg.n_seeds; ++r)
      outcomes[static_cast<std::size_t>(r)] = run_single_seed(data, cfg, r);
    return outcomes;
  }
  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= cfg.n_seeds) return;
      try {
        outcomes[static_cast<std::size_t>(r)] = run_single_seed(data, cfg, r);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  for (int i = 0; i < workers; ++i) threads.emplace_back(worker);
  for (std::thread& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return outcomes;
}

inline RunOutputs cmd_run(const RunConfig& cfg) {
  cfg.validate();
  const Dataset data = load_run_dataset(cfg);
  detail::check_vote_requirements(data, cfg.methods, "input");

  const std::vector<SeedOutcome> outcomes = run_all_seeds(data, cfg);

  std::vector<SeedResult> flat;
  for (const SeedOutcome& outcome : outcomes)
    for (const MethodSeedResult& mr : outcome.per_method)
      flat.push_back(mr.result);
  const std::vector<MethodAggregate> aggregates = compare_report(flat);

  const std::filesystem::path out_dir(cfg.output_dir);
  std::filesystem::create_directories(out_dir);

  RunOutputs outputs;
  outputs.aggregates = aggregates;
  outputs.report_path = out_dir / "report.json";
  write_file_atomic(outputs.report_path,
                    report_json(cfg, outcomes, aggregates).dump(2) + "\n");

  outputs.curves_dir = out_dir / "curves";
  for (const MethodAggregate& agg : aggregates) {
    std::ostringstream os;
    write_curve_csv(os, agg.mean_curve);
    write_file_atomic(
        outputs.curves_dir / (detail::method_file_stem(agg.method) + ".csv"),
        os.str());
  }

  outputs.svg_path = out_dir / "rejection_curves.svg";
  {
    std::ostringstream os;
    write_curves_svg(os, aggregates);
    write_file_atomic(outputs.svg_path, os.str());
  }

  for (const SeedOutcome& outcome : outcomes) {
    char name[32];
    std::snprintf(name, sizeof(name), "seed_%03d", outcome.seed_index);
    const std::filesystem::path seed_dir = out_dir / "seeds" / name;
    write_file_atomic(seed_dir / "predictions.csv",
                      predictions_to_csv(outcome.predictions));
    std::string scores = "example_id,estimator,value\n";
    for (const MethodSeedResult& mr : outcome.per_method) {
      const std::string mname = method_name(mr.method);
      for (std::size_t i = 0; i < mr.scores.size(); ++i) {
        scores += outcome.predictions[i].example_id;
        scores += ',';
        scores += mname;
        scores += ',';
        scores += format_double(mr.scores[i]);
        scores += '\n';
      }
    }
    write_file_atomic(seed_dir / "scores.csv", scores);
    if (cfg.save_ensembles) {
      save_ensemble(outcome.ce, seed_dir / "ensembles" / "ce");
      if (outcome.eae) save_ensemble(*outcome.eae, seed_dir / "ensembles" / "eae");
      if (outcome.mcmc)
        save_ensemble(*outcome.mcmc, seed_dir / "ensembles" / "mcmc");
    }
  }
  return outputs;
}

// --- synth command ---------------------------------------------------------------

inline void cmd_synth(const SyntheticConfig& cfg,
                      const std::filesystem::path& csv_path,
                      bool include_oracle) {
  cfg.validate();
  const Dataset data = synthesize(cfg);
  std::ostringstream os;
  save_csv(data, os, include_oracle);
  write_file_atomic(csv_path, os.str());

  nlohmann::ordered_json manifest;
  manifest["format"] = "eauq-dataset";
  manifest["version"] = 1;
  manifest["provenance"] = "synthesize";
  manifest["synthetic"] = {{"n_examples", cfg.n_examples},
                           {"n_features", cfg.n_features},
                           {"class_separation", cfg.class_separation},
                           {"aleatoric_band_fraction", cfg.aleatoric_band_fraction},
                           {"n_experts", cfg.n_experts},
                           {"expert_noise_sd", cfg.expert_noise_sd},
                           {"seed", cfg.seed}};
  manifest["includes_oracle_column"] = include_oracle;
  manifest["csv"] = csv_path.filename().string();
  std::filesystem::path manifest_path = csv_path;
  manifest_path.replace_extension(".manifest.json");
  write_file_atomic(manifest_path, manifest.dump(2) + "\n");
}

// --- evaluate command --------------------------------------------------------------

namespace detail {

struct ScoreRow {
  std::string example_id;
  std::string estimator;
  double value = 0.0;
};

inline std::size_t find_column(const std::vector<std::string>& header,
                               const std::string& name, const char* file) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw ValidationError(std::string(file) + ": missing column '" + name + "'");
}

}  // namespace detail

// Joins externally produced scores with predictions and reports the metrics
// for every estimator present in the scores file.
inline std::vector<MetricsReport> cmd_evaluate(
    const std::filesystem::path& scores_csv,
    const std::filesystem::path& preds_csv) {
  std::ifstream pis(preds_csv);
  if (!pis) throw IoError("cannot open predictions file " + preds_csv.string());
  std::string line;
  if (!std::getline(pis, line))
    throw UsageError("predictions file is empty: " + preds_csv.string());
  auto pheader = detail::split_csv_line(line);
  const std::size_t pid = detail::find_column(pheader, "example_id", "predictions");
  const std::size_t pprob =
      detail::find_column(pheader, "predicted_prob", "predictions");
  const std::size_t plabel = detail::find_column(pheader, "label", "predictions");

  std::map<std::string, std::pair<double, int>> preds;
  std::size_t row = 1;
  while (std::getline(pis, line)) {
    ++row;
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != pheader.size())
      throw ParseError("predictions row " + std::to_string(row) +
                       ": wrong field count");
    const double prob = detail::parse_double(fields[pprob], row, "predicted_prob");
    const double label = detail::parse_double(fields[plabel], row, "label");
    if (label != 0.0 && label != 1.0)
      throw ValidationError("predictions row " + std::to_string(row) +
                            ": label must be 0 or 1");
    preds[fields[pid]] = {prob, static_cast<int>(label)};
  }
  if (preds.empty())
    throw UsageError("predictions file has no rows: " + preds_csv.string());

  std::ifstream sis(scores_csv);
  if (!sis) throw IoError("cannot open scores file " + scores_csv.string());
  if (!std::getline(sis, line))
    throw UsageError("scores file is empty: " + scores_csv.string());
  auto sheader = detail::split_csv_line(line);
  const std::size_t sid = detail::find_column(sheader, "example_id", "scores");
  const std::size_t sest = detail::find_column(sheader, "estimator", "scores");
  const std::size_t sval = detail::find_column(sheader, "value", "scores");

  std::vector<detail::ScoreRow> rows;
  row = 1;
  while (std::getline(sis, line)) {
    ++row;
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != sheader.size())
      throw ParseError("scores row " + std::to_string(row) +
                       ": wrong field count");
    rows.push_back({fields[sid], fields[sest],
                    detail::parse_double(fields[sval], row, "value")});
  }
  if (rows.empty())
    throw UsageError("scores file has no rows: " + scores_csv.string());

  std::vector<std::string> unmatched;
  for (const auto& r : rows)
    if (!preds.count(r.example_id) && unmatched.size() < 5)
      unmatched.push_back(r.example_id);
  if (!unmatched.empty()) {
    std::string ids;
    for (const auto& id : unmatched) ids += (ids.empty() ? "" : ", ") + id;
    throw InputError("scores reference example ids absent from predictions; "
                     "first offenders: " + ids);
  }

  std::vector<std::string> order;
  std::map<std::string, std::vector<ScoredPrediction>> groups;
  for (const auto& r : rows) {
    auto [it, inserted] = groups.try_emplace(r.estimator);
    if (inserted) order.push_back(r.estimator);
    const auto& [prob, label] = preds[r.example_id];
    it->second.push_back({r.example_id, prob, label, r.value});
  }

  std::vector<MetricsReport> reports;
  reports.reserve(order.size());
  for (const std::string& name : order) {
    const RejectionCurve curve = rejection_curve(groups[name]);
    reports.push_back(compute_metrics(curve, name, 0));
  }
  return reports;
}

inline void print_metrics_table(std::ostream& os,
                                const std::vector<MetricsReport>& reports) {
  char line[160];
  std::snprintf(line, sizeof(line), "%-24s %12s %16s %16s %8s", "estimator",
                "AAC", "acc@10% discard", "frac to 99% acc", "n_test");
  os << line << '\n';
  for (const MetricsReport& m : reports) {
    std::string frac = "unreachable";
    if (m.fraction_to_99pct) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.4f", *m.fraction_to_99pct);
      frac = buf;
    }
    std::snprintf(line, sizeof(line), "%-24s %12.6f %16.4f %16s %8zu",
                  m.estimator.c_str(), m.aac, m.acc_at_10pct_discard,
                  frac.c_str(), m.n_test);
    os << line << '\n';
  }
}

}  // namespace eauq
