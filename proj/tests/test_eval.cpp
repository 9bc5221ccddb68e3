#include <doctest.h>

#include <cmath>
#include <vector>

#include "arinar/errors.hpp"
#include "arinar/eval.hpp"
#include "arinar/rng.hpp"

using namespace arinar;

namespace {

double normal_cdf(double x) { return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))); }

ModelConfig bench_config() {
  ModelConfig cfg;
  cfg.outer_blocks = 1;
  cfg.inner_blocks = 1;
  cfg.width = 16;
  cfg.num_heads = 2;
  cfg.mixture_components = 4;
  cfg.seq_tokens = 4;
  cfg.token_dim = 4;
  cfg.num_classes = 2;
  return cfg;
}

Checkpoint bench_checkpoint(std::uint64_t seed) {
  Checkpoint ckpt;
  ckpt.model_cfg = bench_config();
  ckpt.params = init_params(ckpt.model_cfg, seed);
  ckpt.norm.mean.assign(static_cast<std::size_t>(ckpt.model_cfg.token_dim),
                        0.0);
  ckpt.norm.std.assign(static_cast<std::size_t>(ckpt.model_cfg.token_dim),
                       1.0);
  ckpt.rng_descriptor = "{}";
  return ckpt;
}

}  // namespace

TEST_CASE("ks_test: null rejection rate is near the nominal level") {
  Rng rng(1);
  int rejections = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> samples(2000);
    for (auto& s : samples) s = rng.normal();
    rejections += ks_test(samples, normal_cdf).reject_at_001;
  }
  // expected 1% of 200 = 2; allow generous slack either way
  CHECK(rejections <= 10);
}

TEST_CASE("ks_test: detects a shifted distribution") {
  Rng rng(2);
  std::vector<double> samples(5000);
  for (auto& s : samples) s = rng.normal() + 0.2;
  CHECK(ks_test(samples, normal_cdf).reject_at_001);
}

TEST_CASE("ks_test: accepts a matching two-component mixture") {
  Rng rng(3);
  std::vector<double> samples(20000);
  for (auto& s : samples) {
    const double mu = rng.uniform() < 0.5 ? -1.0 : 1.0;
    s = mu + 0.5 * rng.normal();
  }
  const auto cdf = [](double x) {
    return 0.5 * (0.5 * (1.0 + std::erf((x + 1.0) / (0.5 * std::sqrt(2.0)))) +
                  0.5 * (1.0 + std::erf((x - 1.0) / (0.5 * std::sqrt(2.0)))));
  };
  CHECK_FALSE(ks_test(samples, cdf).reject_at_001);
}

TEST_CASE("ks_test: rejects undersized samples") {
  std::vector<double> samples(999, 0.0);
  CHECK_THROWS_AS(ks_test(samples, normal_cdf), ParamError);
}

TEST_CASE("eval_nll with identity stats equals the training loss") {
  const Checkpoint ckpt = bench_checkpoint(5);
  const auto data =
      make_synthetic(SyntheticProcessSpec::defaults(), ckpt.model_cfg.seq_tokens,
                     ckpt.model_cfg.token_dim, 8, 7);
  CHECK(eval_nll(ckpt, data) ==
        doctest::Approx(nll_loss(ckpt.params, ckpt.model_cfg, data))
            .epsilon(1e-10));
}

TEST_CASE("eval_nll applies the change of variables for non-unit stats") {
  Checkpoint ckpt = bench_checkpoint(6);
  ckpt.norm.mean = {0.5, -0.25, 0.0, 1.0};
  ckpt.norm.std = {2.0, 0.5, 1.0, 4.0};
  const auto data =
      make_synthetic(SyntheticProcessSpec::defaults(), ckpt.model_cfg.seq_tokens,
                     ckpt.model_cfg.token_dim, 8, 9);
  std::vector<TokenSequence> normed;
  for (const auto& seq : data) normed.push_back(normalize(seq, ckpt.norm));
  double log_std_mean = 0.0;
  for (double s : ckpt.norm.std) log_std_mean += std::log(s);
  log_std_mean /= static_cast<double>(ckpt.norm.std.size());
  const double expect =
      nll_loss(ckpt.params, ckpt.model_cfg, normed) + log_std_mean;
  CHECK(eval_nll(ckpt, data) == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("speed_bench: one stub step is no dearer than one real pass") {
  // The stub runs tape-free, so a single step must come in at or below the
  // real inner pass; that keeps the many-step comparison conservative.
  const Checkpoint ckpt = bench_checkpoint(8);
  const BenchReport r = speed_bench(ckpt, 3, 1, 42);
  CHECK(r.num_images == 3);
  CHECK(r.stub_steps == 1);
  CHECK(r.seconds_per_image > 0.0);
  CHECK(r.inner_head_microseconds_per_feature > 0.0);
  CHECK(r.speedup_ratio > 0.05);
  CHECK(r.speedup_ratio < 1.5);
}

TEST_CASE("speed_bench: the ratio grows with the stub step count") {
  // growth is sublinear at this tiny width: the per-token outer pass and
  // graph setup are fixed costs shared by every stub step
  const Checkpoint ckpt = bench_checkpoint(9);
  const BenchReport one = speed_bench(ckpt, 2, 1, 43);
  const BenchReport twenty = speed_bench(ckpt, 2, 20, 43);
  CHECK(twenty.speedup_ratio > 2.5 * one.speedup_ratio);
}
