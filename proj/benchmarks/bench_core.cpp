#include <benchmark/benchmark.h>

#include "arinar/gmm.hpp"
#include "arinar/model.hpp"
#include "arinar/training.hpp"

namespace {

using namespace arinar;

ModelConfig default_config() { return ModelConfig{}; }

TokenSequence random_sequence(const ModelConfig& cfg, Rng& rng) {
  TokenSequence seq;
  seq.length = cfg.seq_tokens;
  seq.dim = cfg.token_dim;
  seq.values.resize(static_cast<std::size_t>(cfg.seq_tokens) * cfg.token_dim);
  for (auto& v : seq.values) v = rng.normal();
  return seq;
}

void BM_OuterForward(benchmark::State& state) {
  const ModelConfig cfg = default_config();
  const ModelParams params = init_params(cfg, 1);
  Rng rng(2);
  const TokenSequence seq = random_sequence(cfg, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(outer_forward(params, cfg, seq, 0));
  }
}
BENCHMARK(BM_OuterForward);

void BM_InnerForward(benchmark::State& state) {
  const ModelConfig cfg = default_config();
  const ModelParams params = init_params(cfg, 3);
  Rng rng(4);
  Mat z(1, cfg.width);
  for (int i = 0; i < cfg.width; ++i) z(0, i) = rng.normal();
  Eigen::VectorXd features(cfg.token_dim);
  for (int i = 0; i < cfg.token_dim; ++i) features(i) = rng.normal();
  for (auto _ : state) {
    benchmark::DoNotOptimize(inner_forward(params, cfg, z, features));
  }
}
BENCHMARK(BM_InnerForward);

void BM_SequenceGradient(benchmark::State& state) {
  const ModelConfig cfg = default_config();
  const ModelParams params = init_params(cfg, 5);
  Rng rng(6);
  const std::vector<TokenSequence> batch{random_sequence(cfg, rng)};
  for (auto _ : state) {
    benchmark::DoNotOptimize(compute_gradients(params, cfg, batch));
  }
}
BENCHMARK(BM_SequenceGradient);

void BM_GmmSample(benchmark::State& state) {
  const Gmm1D g{{0.25, 0.25, 0.25, 0.25},
                {-1.0, 0.0, 1.0, 2.0},
                {0.5, 1.0, 0.5, 1.0}};
  Rng rng(7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample_gmm(g, rng));
  }
}
BENCHMARK(BM_GmmSample);

void BM_GuidedSample(benchmark::State& state) {
  const Gmm1D g_c{{0.5, 0.5}, {-1.0, 1.0}, {0.5, 0.5}};
  const Gmm1D g_u{{0.5, 0.5}, {-0.5, 0.5}, {0.7, 0.7}};
  const GuidanceSpec spec{2.0, 1.0};
  Rng rng(8);
  for (auto _ : state) {
    benchmark::DoNotOptimize(cfg_guided_sample(g_c, g_u, spec, rng));
  }
}
BENCHMARK(BM_GuidedSample);

}  // namespace

BENCHMARK_MAIN();
