#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "arinar/model.hpp"
#include "arinar/training.hpp"

namespace arinar {

struct SamplerConfig {
  double temperature = 1.0;
  double cfg_scale = 0.0;  // w; 0 disables the unconditional pass
  std::uint64_t seed = 0;
  int class_label = 0;
  int num_images = 1;

  void validate(const ModelConfig& cfg) const;
};

// Sample one token feature-by-feature under condition z_cond. When the
// guidance scale is positive, z_uncond (from the null-class pass) must be
// present and each feature is drawn from the guided density; at w=0 this
// is plain tempered GMM sampling.
Eigen::VectorXd generate_token(const ModelParams& params,
                               const ModelConfig& cfg, const Mat& z_cond,
                               const Mat* z_uncond,
                               const SamplerConfig& sampler, Rng& rng);

struct GenStats {
  std::int64_t outer_passes = 0;
  std::int64_t inner_passes = 0;
};

// Full ancestral generation: L outer steps (2L when guidance is on),
// D inner steps per token.
TokenSequence generate_sequence(const ModelParams& params,
                                const ModelConfig& cfg,
                                const SamplerConfig& sampler, Rng& rng,
                                GenStats* stats = nullptr);

// Binary PPM (P6, maxval 255); grayscale inputs are replicated to RGB.
void write_ppm(const ImageGrid& image, const std::string& path);

// Generate, denormalize, unpatchify and write sample_{class}_{index}.ppm
// files plus grid.ppm and a run.json sidecar into out_dir. Returns the
// generated images. Image geometry is inferred from the checkpoint's
// token shape (square grayscale images, patch side sqrt(D)).
std::vector<ImageGrid> generate_images(const Checkpoint& ckpt,
                                       const SamplerConfig& sampler,
                                       const std::string& out_dir);

}  // namespace arinar
