#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "arinar/data.hpp"
#include "arinar/model.hpp"
#include "arinar/rng.hpp"

namespace arinar {

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 0.02;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.95;
  double adam_eps = 1e-8;
  int epochs = 100;
  int warmup_epochs = 10;
  int batch_size = 64;
  double label_dropout_prob = 0.1;
  double grad_clip = 0.0;  // global-norm clip, 0 disables
  std::uint64_t seed = 0;
  int log_every = 50;

  // full-scale training recipe (256-token sequences, long schedule)
  static TrainConfig full_preset();
  void validate() const;
};

using GradMap = std::map<std::string, Mat>;

struct OptimizerState {
  GradMap first_moment;
  GradMap second_moment;
  std::int64_t step = 0;
};

struct Checkpoint {
  ModelConfig model_cfg;
  TrainConfig train_cfg;
  ModelParams params;
  std::optional<OptimizerState> opt;
  NormStats norm;
  std::string rng_descriptor;  // JSON: generator name + training seed
};

// Teacher-forced mean NLL in nats per scalar feature. When dropout_rng is
// given, each label is independently replaced by the null class with
// probability dropout_prob before the forward pass.
double nll_loss(const ModelParams& params, const ModelConfig& cfg,
                const std::vector<TokenSequence>& batch,
                double dropout_prob = 0.0, Rng* dropout_rng = nullptr);

// Reverse-mode gradients of nll_loss for every manifest parameter.
// Sequences are processed in fixed chunks with a fixed reduction order, so
// the result does not depend on thread scheduling.
std::pair<double, GradMap> compute_gradients(
    const ModelParams& params, const ModelConfig& cfg,
    const std::vector<TokenSequence>& batch, double dropout_prob = 0.0,
    Rng* dropout_rng = nullptr);

// Central-finite-difference audit of compute_gradients over a randomized
// coordinate subset covering every parameter tensor (>= 200 coordinates).
// Returns max |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
double gradcheck(const ModelParams& params, const ModelConfig& cfg,
                 const std::vector<TokenSequence>& batch, double epsilon,
                 std::uint64_t seed = 1234, int min_coords = 200);

// Bias-corrected AdamW with decoupled weight decay.
void adamw_update(OptimizerState& state, ModelParams& params,
                  const GradMap& grads, const TrainConfig& cfg,
                  double learning_rate);

// Linear warmup to learning_rate over warmup_epochs, then constant.
// epoch may be fractional (epoch + step/steps_per_epoch).
double lr_at(double epoch, const TrainConfig& cfg);

// Full epoch/batch loop: seeded shuffling, label dropout, AdamW updates,
// JSON-lines progress records on `log` when non-null. Deterministic for a
// fixed seed.
Checkpoint train(const TrainConfig& train_cfg, const ModelConfig& model_cfg,
                 const std::vector<TokenSequence>& dataset,
                 const NormStats& norm, std::ostream* log = nullptr);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace arinar
