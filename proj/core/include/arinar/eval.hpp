#pragma once

#include <functional>
#include <string>
#include <vector>

#include "arinar/generate.hpp"
#include "arinar/training.hpp"

namespace arinar {

struct BenchReport {
  double seconds_per_image = 0.0;
  double inner_head_microseconds_per_feature = 0.0;
  double stub_seconds_per_image = 0.0;
  double speedup_ratio = 0.0;  // stub / actual
  int stub_steps = 0;
  int num_images = 0;
  int threads = 1;
  std::string precision = "f64";
};

// Held-out objective: teacher-forced mean NLL without label dropout.
// The dataset is given in raw feature units; it is normalized with the
// checkpoint's stats and the result is converted back to raw-unit nats.
double eval_nll(const Checkpoint& ckpt,
                const std::vector<TokenSequence>& dataset);

// Times one-by-one generation, then the same loop with every inner GMM
// sampling step replaced by `stub_steps` passes of an equal-width MLP,
// mimicking a many-step iterative head's per-token cost.
BenchReport speed_bench(const Checkpoint& ckpt, int num_images,
                        int stub_steps, std::uint64_t seed = 0);

struct KsResult {
  double statistic = 0.0;
  bool reject_at_001 = false;
};

// Two-sided Kolmogorov-Smirnov test of samples against a CDF oracle,
// using the asymptotic critical value at alpha = 0.01.
KsResult ks_test(std::vector<double> samples,
                 const std::function<double(double)>& cdf);

}  // namespace arinar
