#include "arinar/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include "arinar/errors.hpp"

namespace arinar {

double eval_nll(const Checkpoint& ckpt,
                const std::vector<TokenSequence>& dataset) {
  if (dataset.empty()) throw Error("eval_nll: empty dataset");
  std::vector<TokenSequence> normalized;
  normalized.reserve(dataset.size());
  for (const auto& seq : dataset) {
    normalized.push_back(normalize(seq, ckpt.norm));
  }
  // change of variables back to raw feature units
  double log_std_mean = 0.0;
  for (double s : ckpt.norm.std) log_std_mean += std::log(s);
  log_std_mean /= static_cast<double>(ckpt.norm.std.size());
  return nll_loss(ckpt.params, ckpt.model_cfg, normalized) + log_std_mean;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Generation loop with the inner transformer's sampling step replaced by
// `stub_steps` passes of a width-matched MLP over the same feature prefix,
// standing in for an iterative (diffusion-style) head.
double stub_generate_seconds(const Checkpoint& ckpt, int num_images,
                             int stub_steps, std::uint64_t seed) {
  const ModelConfig& cfg = ckpt.model_cfg;
  const int w = cfg.width;
  Rng init_rng(seed ^ 0x517bull);
  Mat w1(w, 4 * w), w2(4 * w, w);
  for (Eigen::Index i = 0; i < w1.size(); ++i) {
    *(w1.data() + i) = 0.02 * init_rng.normal();
  }
  for (Eigen::Index i = 0; i < w2.size(); ++i) {
    *(w2.data() + i) = 0.02 * init_rng.normal();
  }
  Mat embed_w(1, w);
  for (Eigen::Index i = 0; i < w; ++i) embed_w(0, i) = 0.02 * init_rng.normal();

  SamplerConfig sampler;
  sampler.class_label = 0;

  const auto t0 = Clock::now();
  for (int img = 0; img < num_images; ++img) {
    Mat prefix(0, cfg.token_dim);
    for (int t = 0; t < cfg.seq_tokens; ++t) {
      Tape tape;
      const BoundParams bound = bind_params(tape, ckpt.params);
      const Mat z = tape.val(outer_forward_tape(tape, bound, cfg, prefix,
                                                sampler.class_label));
      (void)z;

      Eigen::VectorXd features(cfg.token_dim);
      for (int i = 0; i < cfg.token_dim; ++i) {
        // prefix sequence seen by the head at this step
        Mat h = Mat::Zero(i + 1, w);
        h.row(0).setZero();
        for (int j = 0; j < i; ++j) h.row(j + 1) = features(j) * embed_w;
        double acc = 0.0;
        for (int s = 0; s < stub_steps; ++s) {
          Mat hidden = (h * w1).array().tanh();
          h = hidden * w2;
          acc = h.mean();
        }
        features(i) = std::tanh(acc);
      }
      prefix.conservativeResize(t + 1, cfg.token_dim);
      prefix.row(t) = features.transpose();
    }
  }
  return seconds_since(t0) / num_images;
}

}  // namespace

BenchReport speed_bench(const Checkpoint& ckpt, int num_images, int stub_steps,
                        std::uint64_t seed) {
  if (num_images < 1) throw ParamError("speed_bench: need at least 1 image");
  if (stub_steps < 1) throw ParamError("speed_bench: stub_steps must be >= 1");
  const ModelConfig& cfg = ckpt.model_cfg;

  SamplerConfig sampler;
  sampler.class_label = 0;
  sampler.seed = seed;

  // one warm-up image before timing
  {
    Rng rng = Rng::substream(seed, 0);
    (void)generate_sequence(ckpt.params, cfg, sampler, rng);
  }

  const auto t0 = Clock::now();
  for (int i = 0; i < num_images; ++i) {
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(i));
    (void)generate_sequence(ckpt.params, cfg, sampler, rng);
  }
  const double actual = seconds_since(t0) / num_images;

  // isolate the inner head: D feature steps under one condition vector
  double inner_us = 0.0;
  {
    Tape tape;
    const BoundParams bound = bind_params(tape, ckpt.params);
    const Mat z = Mat::Zero(1, cfg.width);
    Rng rng = Rng::substream(seed, 9001);
    const auto ti = Clock::now();
    const int reps = 8;
    for (int r = 0; r < reps; ++r) {
      Eigen::VectorXd features(cfg.token_dim);
      for (int i = 0; i < cfg.token_dim; ++i) {
        const Mat raw = tape.val(inner_forward_tape(
            tape, bound, cfg, tape.constant(z), features.head(i)));
        RawGmmOutput o;
        const int k = cfg.mixture_components;
        o.weight_logits.resize(static_cast<std::size_t>(k));
        o.means.resize(static_cast<std::size_t>(k));
        o.log_stds.resize(static_cast<std::size_t>(k));
        for (int j = 0; j < k; ++j) {
          o.weight_logits[static_cast<std::size_t>(j)] = raw(i, j);
          o.means[static_cast<std::size_t>(j)] = raw(i, k + j);
          o.log_stds[static_cast<std::size_t>(j)] = raw(i, 2 * k + j);
        }
        features(i) = sample_gmm(gmm_from_raw(o), rng);
      }
    }
    inner_us = seconds_since(ti) * 1e6 / (reps * cfg.token_dim);
  }

  const double stub =
      stub_generate_seconds(ckpt, num_images, stub_steps, seed);

  BenchReport report;
  report.seconds_per_image = actual;
  report.inner_head_microseconds_per_feature = inner_us;
  report.stub_seconds_per_image = stub;
  report.speedup_ratio = stub / actual;
  report.stub_steps = stub_steps;
  report.num_images = num_images;
  report.threads = 1;  // generation is single-image, single-thread
  return report;
}

KsResult ks_test(std::vector<double> samples,
                 const std::function<double(double)>& cdf) {
  const std::size_t n = samples.size();
  if (n < 1000) throw ParamError("ks_test: need at least 1000 samples");
  std::sort(samples.begin(), samples.end());

  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = cdf(samples[i]);
    const double hi = static_cast<double>(i + 1) / static_cast<double>(n) - f;
    const double lo = f - static_cast<double>(i) / static_cast<double>(n);
    d = std::max(d, std::max(hi, lo));
  }

  // asymptotic Kolmogorov critical value at alpha = 0.01
  constexpr double kCrit001 = 1.62762;
  KsResult res;
  res.statistic = d;
  res.reject_at_001 = std::sqrt(static_cast<double>(n)) * d > kCrit001;
  return res;
}

}  // namespace arinar
