#pragma once

// Uncertainty estimators: ensemble standard deviation (epistemic), expert and
// model MP (aleatoric), snapshot and dropout ensembles, expert-aware
// fine-tuned ensembles, and the additive combinations between them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "eauq/data.hpp"
#include "eauq/errors.hpp"
#include "eauq/mlp.hpp"
#include "eauq/rng.hpp"

namespace eauq {

inline constexpr int kDefaultCeMembers = 20;
inline constexpr int kDefaultMcmcInterval = 15;
inline constexpr int kDefaultMcmcKeep = 10;
inline constexpr int kDefaultDropoutPasses = 50;
inline constexpr double kDefaultDropoutRate = 0.2;

enum class EnsembleKind { Classification, McmcSnapshots, DropoutPasses, ExpertAware };

inline std::string ensemble_kind_name(EnsembleKind kind) {
  switch (kind) {
    case EnsembleKind::Classification: return "classification";
    case EnsembleKind::McmcSnapshots: return "mcmc_snapshots";
    case EnsembleKind::DropoutPasses: return "dropout_passes";
    case EnsembleKind::ExpertAware: return "expert_aware";
  }
  return "classification";
}

inline EnsembleKind parse_ensemble_kind(std::string_view name) {
  if (name == "classification") return EnsembleKind::Classification;
  if (name == "mcmc_snapshots") return EnsembleKind::McmcSnapshots;
  if (name == "dropout_passes") return EnsembleKind::DropoutPasses;
  if (name == "expert_aware") return EnsembleKind::ExpertAware;
  throw ParseError("unknown ensemble kind '" + std::string(name) + "'");
}

struct Ensemble {
  EnsembleKind kind = EnsembleKind::Classification;
  std::vector<MlpModel> members;
  std::vector<std::uint64_t> member_seeds;
  std::vector<int> snapshot_epochs;  // McmcSnapshots only
  int n_passes = 0;                  // DropoutPasses only
  std::uint64_t pass_seed = 0;       // DropoutPasses only

  std::size_t size() const { return members.size(); }
};

enum class EstimatorTag {
  StdCe,
  StdEae,
  MpExp,
  MpEan,
  MpEae,
  MpOracle,
  Sum,
  McmcStd,
  McdropoutStd,
};

inline std::string estimator_tag_name(EstimatorTag tag) {
  switch (tag) {
    case EstimatorTag::StdCe: return "STD_CE";
    case EstimatorTag::StdEae: return "STD_EAE";
    case EstimatorTag::MpExp: return "MP_EXP";
    case EstimatorTag::MpEan: return "MP_EAN";
    case EstimatorTag::MpEae: return "MP_EAE";
    case EstimatorTag::MpOracle: return "MP_ORACLE";
    case EstimatorTag::Sum: return "SUM";
    case EstimatorTag::McmcStd: return "MCMC_STD";
    case EstimatorTag::McdropoutStd: return "MCDROPOUT_STD";
  }
  return "SUM";
}

struct UncertaintyScore {
  double value = 0.0;
  EstimatorTag tag = EstimatorTag::StdCe;
  std::string example_id;
  // Filled for Sum scores only.
  std::optional<std::pair<EstimatorTag, EstimatorTag>> components;

  std::string tag_string() const {
    if (tag == EstimatorTag::Sum && components)
      return "SUM(" + estimator_tag_name(components->first) + "," +
             estimator_tag_name(components->second) + ")";
    return estimator_tag_name(tag);
  }
};

inline UncertaintyScore sum_scores(const UncertaintyScore& a,
                                   const UncertaintyScore& b) {
  UncertaintyScore out;
  out.value = a.value + b.value;
  out.tag = EstimatorTag::Sum;
  out.example_id = a.example_id.empty() ? b.example_id : a.example_id;
  out.components = {a.tag, b.tag};
  return out;
}

// Population standard deviation (divisor k, not k-1). Values are summed in
// sorted order, so the result is exactly permutation-invariant.
inline double population_std(std::span<const double> values) {
  if (values.size() < 2)
    throw InputError("population_std: need at least two values");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  double mean = 0.0;
  for (double v : sorted) mean += v;
  mean /= static_cast<double>(sorted.size());
  double ss = 0.0;
  for (double v : sorted) {
    const double d = v - mean;
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(sorted.size()));
}

// Distance of a probability from certain 0/1; maximal (0.5) at p = 0.5.
inline double mp_value(double p) {
  if (!(p >= 0.0 && p <= 1.0))
    throw InputError("mp_value: probability outside [0,1]");
  return std::min(p, 1.0 - p);
}

inline std::vector<double> member_outputs(const Ensemble& ensemble,
                                          std::span<const double> x) {
  std::vector<double> outputs;
  outputs.reserve(ensemble.size());
  for (const MlpModel& m : ensemble.members) outputs.push_back(forward(m, x));
  return outputs;
}

// Arithmetic mean of the members' deterministic outputs.
inline double ensemble_mean(const Ensemble& ensemble, std::span<const double> x) {
  if (ensemble.members.empty())
    throw InputError("ensemble_mean: ensemble has no members");
  double sum = 0.0;
  for (const MlpModel& m : ensemble.members) sum += forward(m, x);
  return sum / static_cast<double>(ensemble.size());
}

inline EstimatorTag std_tag_for(EnsembleKind kind) {
  switch (kind) {
    case EnsembleKind::Classification: return EstimatorTag::StdCe;
    case EnsembleKind::ExpertAware: return EstimatorTag::StdEae;
    case EnsembleKind::McmcSnapshots: return EstimatorTag::McmcStd;
    case EnsembleKind::DropoutPasses: return EstimatorTag::McdropoutStd;
  }
  return EstimatorTag::StdCe;
}

inline UncertaintyScore mc_dropout_uncertainty(const MlpModel& model,
                                               std::span<const double> x,
                                               int n_passes, double dropout_rate,
                                               std::uint64_t seed,
                                               std::string example_id = {});

// Disagreement of the members on x: population SD of their outputs. For a
// dropout ensemble the stochastic passes are the effective members.
inline UncertaintyScore std_uncertainty(const Ensemble& ensemble,
                                        std::span<const double> x,
                                        std::string example_id = {}) {
  if (ensemble.kind == EnsembleKind::DropoutPasses) {
    if (ensemble.members.size() != 1 || ensemble.n_passes < 2)
      throw InputError("std_uncertainty: malformed dropout ensemble");
    return mc_dropout_uncertainty(ensemble.members[0], x, ensemble.n_passes,
                                  ensemble.members[0].dropout_rate,
                                  ensemble.pass_seed, std::move(example_id));
  }
  if (ensemble.size() < 2)
    throw InputError("std_uncertainty: need at least two ensemble members");
  UncertaintyScore score;
  score.value = population_std(member_outputs(ensemble, x));
  score.tag = std_tag_for(ensemble.kind);
  score.example_id = std::move(example_id);
  return score;
}

// Aleatoric uncertainty from expert votes: with mean vote m, both
// 1 - max(m, 1-m) and |[m] - m| reduce to min(m, 1-m). Votes are quarters,
// so the mean is q/(4n) for an integer q and the value is computed in exact
// quarter units before the single final division.
inline UncertaintyScore expert_mp(std::span<const double> votes,
                                  std::string example_id = {}) {
  if (votes.empty()) throw InputError("expert_mp: no votes given");
  long long quarters = 0;
  for (double v : votes) {
    if (!on_vote_grid(v))
      throw ValidationError("expert_mp: vote " + std::to_string(v) +
                            " is not one of 0.00/0.25/0.50/0.75/1.00");
    quarters += std::llround(v * 4.0);
  }
  const long long total = 4LL * static_cast<long long>(votes.size());
  UncertaintyScore score;
  score.value = static_cast<double>(std::min(quarters, total - quarters)) /
                static_cast<double>(total);
  score.tag = EstimatorTag::MpExp;
  score.example_id = std::move(example_id);
  return score;
}

// Mean of the votes, on the exact quarter grid.
inline double expert_mean_vote(std::span<const double> votes) {
  if (votes.empty()) throw InputError("expert_mean_vote: no votes given");
  double sum = 0.0;
  for (double v : votes) sum += v;
  return sum / static_cast<double>(votes.size());
}

// MP of a model output probability.
inline UncertaintyScore model_mp(double p, EstimatorTag tag,
                                 std::string example_id = {}) {
  UncertaintyScore score;
  score.value = mp_value(p);
  score.tag = tag;
  score.example_id = std::move(example_id);
  return score;
}

// --- ensemble builders -------------------------------------------------------

struct MlpSpec {
  std::vector<int> hidden_layers = {16, 16};
  double dropout_rate = kDefaultDropoutRate;

  std::vector<int> layer_sizes(int input_dim) const {
    std::vector<int> sizes;
    sizes.reserve(hidden_layers.size() + 2);
    sizes.push_back(input_dim);
    sizes.insert(sizes.end(), hidden_layers.begin(), hidden_layers.end());
    sizes.push_back(1);
    return sizes;
  }
};

// Classification ensemble: k independently seeded nets, each trained on its
// own shuffle of the shared train+validation pool. Diversity comes from
// initialization and from the per-member train/val split.
inline Ensemble build_ce(const TrainingSet& pool, double member_train_fraction,
                         const MlpSpec& spec, const TrainConfig& base_config,
                         int k, std::uint64_t master_seed) {
  if (k < 2) throw InputError("build_ce: need at least two members");
  if (!(member_train_fraction > 0.0 && member_train_fraction <= 1.0))
    throw InputError("build_ce: member_train_fraction must lie in (0,1]");
  pool.validate();
  if (pool.size() == 0) throw InputError("build_ce: empty training pool");

  const auto n_member = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(member_train_fraction *
                                               static_cast<double>(pool.size()))));
  const int input_dim = static_cast<int>(pool.features[0].size());

  Ensemble ensemble;
  ensemble.kind = EnsembleKind::Classification;
  ensemble.members.reserve(static_cast<std::size_t>(k));
  ensemble.member_seeds.reserve(static_cast<std::size_t>(k));

  std::vector<std::size_t> indices(pool.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;

  for (int m = 0; m < k; ++m) {
    const std::uint64_t init_seed = derive_seed(master_seed, "ce-init", m);
    RandomStream(derive_seed(master_seed, "ce-split", m)).shuffle(indices);
    TrainingSet member_train;
    member_train.features.reserve(n_member);
    member_train.targets.reserve(n_member);
    for (std::size_t i = 0; i < n_member; ++i) {
      member_train.features.push_back(pool.features[indices[i]]);
      member_train.targets.push_back(pool.targets[indices[i]]);
    }
    MlpModel model =
        make_mlp(spec.layer_sizes(input_dim), spec.dropout_rate, init_seed);
    TrainConfig cfg = base_config;
    cfg.seed = derive_seed(master_seed, "ce-train", m);
    cfg.checkpoint_interval_epochs.reset();
    try {
      ensemble.members.push_back(train(model, member_train, cfg).model);
    } catch (const TrainingDivergedError& e) {
      throw TrainingDivergedError(
          "build_ce: member " + std::to_string(m) + ": " + e.what(), e.epoch());
    }
    ensemble.member_seeds.push_back(init_seed);
  }
  return ensemble;
}

// Snapshot ensemble: one training run checkpointed every `interval` epochs;
// the last `keep` checkpoints become the members, oldest first.
inline Ensemble build_mcmc_ensemble(const TrainingSet& train_set,
                                    const MlpSpec& spec, TrainConfig cfg,
                                    int interval, int keep,
                                    std::uint64_t master_seed) {
  if (keep < 2)
    throw InputError("build_mcmc_ensemble: need to keep at least two snapshots");
  if (interval < 1)
    throw InputError("build_mcmc_ensemble: interval must be positive");
  if (cfg.epochs / interval < keep)
    throw ConfigError("build_mcmc_ensemble: " + std::to_string(cfg.epochs) +
                      " epochs at interval " + std::to_string(interval) +
                      " yield fewer than " + std::to_string(keep) +
                      " checkpoints");
  train_set.validate();
  const int input_dim = static_cast<int>(train_set.features.at(0).size());
  MlpModel model = make_mlp(spec.layer_sizes(input_dim), spec.dropout_rate,
                            derive_seed(master_seed, "mcmc-init"));
  cfg.seed = derive_seed(master_seed, "mcmc-train");
  cfg.checkpoint_interval_epochs = interval;
  TrainResult result = train(model, train_set, cfg);

  Ensemble ensemble;
  ensemble.kind = EnsembleKind::McmcSnapshots;
  const std::size_t first = result.checkpoints.size() - static_cast<std::size_t>(keep);
  for (std::size_t i = first; i < result.checkpoints.size(); ++i) {
    ensemble.members.push_back(std::move(result.checkpoints[i].model));
    ensemble.snapshot_epochs.push_back(result.checkpoints[i].epoch);
    ensemble.member_seeds.push_back(cfg.seed);
  }
  return ensemble;
}

// Virtual ensemble of stochastic forward passes through one net.
inline Ensemble make_dropout_ensemble(MlpModel base, int n_passes,
                                      std::uint64_t pass_seed) {
  if (n_passes < 2)
    throw InputError("make_dropout_ensemble: need at least two passes");
  Ensemble ensemble;
  ensemble.kind = EnsembleKind::DropoutPasses;
  ensemble.members.push_back(std::move(base));
  ensemble.n_passes = n_passes;
  ensemble.pass_seed = pass_seed;
  return ensemble;
}

// Population SD over seeded stochastic forward passes with dropout active.
inline UncertaintyScore mc_dropout_uncertainty(const MlpModel& model,
                                               std::span<const double> x,
                                               int n_passes, double dropout_rate,
                                               std::uint64_t seed,
                                               std::string example_id) {
  if (n_passes < 2)
    throw InputError("mc_dropout_uncertainty: need at least two passes");
  if (model.dropout_rate != dropout_rate)
    throw InputError("mc_dropout_uncertainty: model trained with dropout " +
                     std::to_string(model.dropout_rate) +
                     " but inference requested " + std::to_string(dropout_rate));
  std::vector<double> outputs;
  outputs.reserve(static_cast<std::size_t>(n_passes));
  for (int j = 0; j < n_passes; ++j)
    outputs.push_back(
        forward(model, x, ForwardMode::dropout(derive_seed(seed, "pass", j))));
  UncertaintyScore score;
  score.value = population_std(outputs);
  score.tag = EstimatorTag::McdropoutStd;
  score.example_id = std::move(example_id);
  return score;
}

// Expert-aware ensemble: every classification member fine-tuned to regress
// the mean expert vote. Member order is preserved.
inline Ensemble build_eae(const Ensemble& ce, const Dataset& expert_train,
                          const TrainConfig& finetune_cfg) {
  if (ce.kind != EnsembleKind::Classification)
    throw InputError("build_eae: source ensemble must be a classification ensemble");
  const TrainingSet targets = to_expert_mean_targets(expert_train);
  Ensemble eae;
  eae.kind = EnsembleKind::ExpertAware;
  eae.member_seeds = ce.member_seeds;
  eae.members.reserve(ce.size());
  for (std::size_t m = 0; m < ce.size(); ++m) {
    TrainConfig cfg = finetune_cfg;
    cfg.seed = derive_seed(finetune_cfg.seed, "eae-member", m);
    eae.members.push_back(finetune_to_experts(ce.members[m], targets, cfg));
  }
  return eae;
}

// --- method dispatch ---------------------------------------------------------

enum class Method {
  CeStd,
  Mcmc,
  McDropout,
  EaeMp,
  EanMpPlusCeStd,
  EaeMpPlusCeStd,
  EaeMpPlusEaeStd,
  ExpMp,
  ExpMpPlusCeStd,
  OracleMp,  // reference estimator, not part of the standard comparison set
};

inline std::string method_name(Method m) {
  switch (m) {
    case Method::CeStd: return "CE_STD";
    case Method::Mcmc: return "MCMC";
    case Method::McDropout: return "MC_DROPOUT";
    case Method::EaeMp: return "EAE_MP";
    case Method::EanMpPlusCeStd: return "EAN_MP+CE_STD";
    case Method::EaeMpPlusCeStd: return "EAE_MP+CE_STD";
    case Method::EaeMpPlusEaeStd: return "EAE_MP+EAE_STD";
    case Method::ExpMp: return "EXP_MP";
    case Method::ExpMpPlusCeStd: return "EXP_MP+CE_STD";
    case Method::OracleMp: return "ORACLE_MP";
  }
  return "CE_STD";
}

inline std::optional<Method> parse_method(std::string_view name) {
  static const std::pair<std::string_view, Method> table[] = {
      {"CE_STD", Method::CeStd},
      {"MCMC", Method::Mcmc},
      {"MC_DROPOUT", Method::McDropout},
      {"EAE_MP", Method::EaeMp},
      {"EAN_MP+CE_STD", Method::EanMpPlusCeStd},
      {"EAE_MP+CE_STD", Method::EaeMpPlusCeStd},
      {"EAE_MP+EAE_STD", Method::EaeMpPlusEaeStd},
      {"EXP_MP", Method::ExpMp},
      {"EXP_MP+CE_STD", Method::ExpMpPlusCeStd},
      {"ORACLE_MP", Method::OracleMp},
  };
  for (const auto& [key, value] : table)
    if (key == name) return value;
  return std::nullopt;
}

// The nine-method comparison set.
inline const std::vector<Method>& comparison_methods() {
  static const std::vector<Method> methods = {
      Method::CeStd,          Method::Mcmc,
      Method::McDropout,      Method::EaeMp,
      Method::EanMpPlusCeStd, Method::EaeMpPlusCeStd,
      Method::EaeMpPlusEaeStd, Method::ExpMp,
      Method::ExpMpPlusCeStd,
  };
  return methods;
}

inline bool method_needs_votes_at_inference(Method m) {
  return m == Method::ExpMp || m == Method::ExpMpPlusCeStd;
}

inline bool method_needs_expert_training(Method m) {
  return m == Method::EaeMp || m == Method::EanMpPlusCeStd ||
         m == Method::EaeMpPlusCeStd || m == Method::EaeMpPlusEaeStd;
}

inline bool method_uses_full_eae(Method m) {
  return m == Method::EaeMp || m == Method::EaeMpPlusCeStd ||
         m == Method::EaeMpPlusEaeStd;
}

struct ScoreContext {
  const Ensemble* ce = nullptr;
  const Ensemble* eae = nullptr;
  const Ensemble* mcmc = nullptr;
  const MlpModel* ean = nullptr;  // the designated fine-tuned net (CE member 0)
  std::span<const double> features;
  const std::vector<double>* expert_votes = nullptr;
  std::optional<double> oracle_positive_prob;
  int dropout_passes = kDefaultDropoutPasses;
  double dropout_rate = kDefaultDropoutRate;
  std::uint64_t dropout_seed = 0;
  std::string example_id;
};

namespace detail {

inline const Ensemble& require_ensemble(const Ensemble* e, Method m,
                                        const char* which) {
  if (!e)
    throw InputError("estimate: method " + method_name(m) + " needs the " +
                     which + " ensemble");
  return *e;
}

}  // namespace detail

inline UncertaintyScore estimate(Method m, const ScoreContext& ctx);

// Raw (aleatoric, epistemic) component pair of an additive method; nullopt
// for methods that are not sums.
inline std::optional<std::pair<UncertaintyScore, UncertaintyScore>>
estimate_sum_components(Method m, const ScoreContext& ctx) {
  using detail::require_ensemble;
  switch (m) {
    case Method::EanMpPlusCeStd: {
      if (!ctx.ean)
        throw InputError("estimate: method EAN_MP+CE_STD needs the fine-tuned net");
      UncertaintyScore mp = model_mp(forward(*ctx.ean, ctx.features),
                                     EstimatorTag::MpEan, ctx.example_id);
      return std::pair{mp, std_uncertainty(require_ensemble(ctx.ce, m,
                                                            "classification"),
                                           ctx.features, ctx.example_id)};
    }
    case Method::EaeMpPlusCeStd: {
      UncertaintyScore mp = model_mp(
          ensemble_mean(require_ensemble(ctx.eae, m, "expert-aware"),
                        ctx.features),
          EstimatorTag::MpEae, ctx.example_id);
      return std::pair{mp, std_uncertainty(require_ensemble(ctx.ce, m,
                                                            "classification"),
                                           ctx.features, ctx.example_id)};
    }
    case Method::EaeMpPlusEaeStd: {
      const Ensemble& eae = require_ensemble(ctx.eae, m, "expert-aware");
      UncertaintyScore mp = model_mp(ensemble_mean(eae, ctx.features),
                                     EstimatorTag::MpEae, ctx.example_id);
      return std::pair{mp, std_uncertainty(eae, ctx.features, ctx.example_id)};
    }
    case Method::ExpMpPlusCeStd: {
      if (!ctx.expert_votes || ctx.expert_votes->empty())
        throw MissingAnnotationError(
            "estimate: method EXP_MP+CE_STD needs expert votes at inference");
      UncertaintyScore mp = expert_mp(*ctx.expert_votes, ctx.example_id);
      return std::pair{mp, std_uncertainty(require_ensemble(ctx.ce, m,
                                                            "classification"),
                                           ctx.features, ctx.example_id)};
    }
    default:
      return std::nullopt;
  }
}

// Scores one example under the requested method. Sum methods add the raw
// component values without rescaling.
inline UncertaintyScore estimate(Method m, const ScoreContext& ctx) {
  using detail::require_ensemble;
  if (auto parts = estimate_sum_components(m, ctx))
    return sum_scores(parts->first, parts->second);
  switch (m) {
    case Method::CeStd:
      return std_uncertainty(require_ensemble(ctx.ce, m, "classification"),
                             ctx.features, ctx.example_id);
    case Method::Mcmc: {
      UncertaintyScore s =
          std_uncertainty(require_ensemble(ctx.mcmc, m, "snapshot"),
                          ctx.features, ctx.example_id);
      s.tag = EstimatorTag::McmcStd;
      return s;
    }
    case Method::McDropout: {
      // One dropout ensemble per classification net, averaged across the CE.
      const Ensemble& ce = require_ensemble(ctx.ce, m, "classification");
      if (ce.members.empty())
        throw InputError("estimate: MC_DROPOUT needs ensemble members");
      double total = 0.0;
      for (std::size_t i = 0; i < ce.size(); ++i)
        total += mc_dropout_uncertainty(
                     ce.members[i], ctx.features, ctx.dropout_passes,
                     ctx.dropout_rate,
                     derive_seed(ctx.dropout_seed, "member", i))
                     .value;
      UncertaintyScore score;
      score.value = total / static_cast<double>(ce.size());
      score.tag = EstimatorTag::McdropoutStd;
      score.example_id = ctx.example_id;
      return score;
    }
    case Method::EaeMp:
      // MP of the expert-aware ensemble's mean output.
      return model_mp(
          ensemble_mean(require_ensemble(ctx.eae, m, "expert-aware"),
                        ctx.features),
          EstimatorTag::MpEae, ctx.example_id);
    case Method::ExpMp:
      if (!ctx.expert_votes || ctx.expert_votes->empty())
        throw MissingAnnotationError(
            "estimate: method EXP_MP needs expert votes at inference");
      return expert_mp(*ctx.expert_votes, ctx.example_id);
    case Method::OracleMp:
      if (!ctx.oracle_positive_prob)
        throw MissingAnnotationError(
            "estimate: method ORACLE_MP needs the generator's true_positive_prob");
      return model_mp(*ctx.oracle_positive_prob, EstimatorTag::MpOracle,
                      ctx.example_id);
    default:
      throw InputError("estimate: unknown method");
  }
}

// --- persistence -------------------------------------------------------------

inline void save_ensemble(const Ensemble& ensemble,
                          const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["format"] = "eauq-ensemble";
  manifest["version"] = 1;
  manifest["kind"] = ensemble_kind_name(ensemble.kind);
  manifest["member_seeds"] = ensemble.member_seeds;
  if (!ensemble.snapshot_epochs.empty())
    manifest["snapshot_epochs"] = ensemble.snapshot_epochs;
  if (ensemble.kind == EnsembleKind::DropoutPasses) {
    manifest["n_passes"] = ensemble.n_passes;
    manifest["pass_seed"] = ensemble.pass_seed;
  }
  std::vector<std::string> files;
  for (std::size_t m = 0; m < ensemble.size(); ++m) {
    char name[32];
    std::snprintf(name, sizeof(name), "member_%03zu.mlp", m);
    files.emplace_back(name);
    save_model_file(ensemble.members[m], (dir / name).string());
  }
  manifest["members"] = files;
  std::ofstream os(dir / "manifest.json");
  if (!os) throw IoError("save_ensemble: cannot write manifest in " + dir.string());
  os << manifest.dump(2) << '\n';
}

inline Ensemble load_ensemble(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw IoError("load_ensemble: cannot open manifest in " + dir.string());
  nlohmann::json manifest = nlohmann::json::parse(is);
  if (manifest.value("format", "") != "eauq-ensemble")
    throw ParseError("load_ensemble: not an ensemble manifest");
  Ensemble ensemble;
  ensemble.kind = parse_ensemble_kind(manifest.at("kind").get<std::string>());
  ensemble.member_seeds =
      manifest.value("member_seeds", std::vector<std::uint64_t>{});
  ensemble.snapshot_epochs =
      manifest.value("snapshot_epochs", std::vector<int>{});
  ensemble.n_passes = manifest.value("n_passes", 0);
  ensemble.pass_seed = manifest.value("pass_seed", std::uint64_t{0});
  for (const auto& name : manifest.at("members"))
    ensemble.members.push_back(
        load_model_file((dir / name.get<std::string>()).string()));
  return ensemble;
}

}  // namespace eauq
