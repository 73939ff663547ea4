// Minimal end-to-end walk-through of the library: synthesize an
// expert-annotated dataset, train a small classification ensemble, score the
// test set with an epistemic-only estimator and an expert-augmented one, and
// compare the rejection metrics.

#include <iostream>

#include "eauq/eauq.hpp"

int main() {
  using namespace eauq;

  SyntheticConfig synth;
  synth.n_examples = 800;
  synth.n_features = 48;
  synth.n_experts = 6;
  synth.expert_noise_sd = 0.15;
  synth.seed = 42;
  const Dataset data = synthesize(synth);

  SplitSpec spec;
  spec.master_seed = 7;
  const SplitResult parts = split(data, spec);

  Dataset pool;
  pool.examples = parts.train.examples;
  pool.examples.insert(pool.examples.end(), parts.val.examples.begin(),
                       parts.val.examples.end());

  TrainConfig train_cfg;
  train_cfg.epochs = 150;
  train_cfg.initial_lr = 0.3;
  train_cfg.batch_size = 16;
  train_cfg.weight_decay = 1e-5;

  MlpSpec arch;
  arch.hidden_layers = {16, 16};
  const Ensemble ce = build_ce(to_classification_targets(pool), 0.5, arch,
                               train_cfg, 8, /*master_seed=*/1);

  std::vector<ScoredPrediction> epistemic_only, expert_augmented;
  for (const Example& ex : parts.test.examples) {
    ScoreContext ctx;
    ctx.ce = &ce;
    ctx.features = ex.features;
    ctx.expert_votes = ex.expert_votes ? &*ex.expert_votes : nullptr;
    ctx.example_id = ex.id;
    const double prob = ensemble_mean(ce, ex.features);
    epistemic_only.push_back(
        {ex.id, prob, ex.label, estimate(Method::CeStd, ctx).value});
    expert_augmented.push_back(
        {ex.id, prob, ex.label, estimate(Method::ExpMpPlusCeStd, ctx).value});
  }

  const RejectionCurve base_curve = rejection_curve(epistemic_only);
  const RejectionCurve expert_curve = rejection_curve(expert_augmented);
  std::cout << "test accuracy:            " << base_curve.points[0].accuracy
            << '\n'
            << "AAC, CE_STD:              " << aac(base_curve) << '\n'
            << "AAC, EXP_MP+CE_STD:       " << aac(expert_curve) << '\n';
  return 0;
}
