#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "arinar/rng.hpp"

namespace arinar {

struct ImageGrid {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<double> pixels;  // row-major, values in [0,1]
};

// One image as L tokens of D continuous features. class_label lives in
// [0, num_classes], where index num_classes is the null (unconditional)
// class.
struct TokenSequence {
  int length = 0;  // L
  int dim = 0;     // D
  std::vector<double> values;
  int class_label = 0;

  double& at(int t, int i) { return values[static_cast<std::size_t>(t) * dim + i]; }
  double at(int t, int i) const {
    return values[static_cast<std::size_t>(t) * dim + i];
  }
};

struct NormStats {
  std::vector<double> mean;  // length D
  std::vector<double> std;   // length D, floored at 1e-6
};

// Linear-autoregressive Gaussian oracle process with known per-feature
// conditional entropy; used for likelihood acceptance runs.
struct SyntheticProcessSpec {
  int num_classes = 2;
  std::vector<double> within_coef;  // a_c, |a_c| < 1
  std::vector<double> across_coef;  // b_c, |b_c| < 1
  std::vector<double> base_mean;    // mu_c
  double noise_std = 0.5;

  static SyntheticProcessSpec defaults();
  void validate() const;
};

ImageGrid unpatchify(const TokenSequence& tokens, int height, int width,
                     int channels, int patch);
TokenSequence patchify(const ImageGrid& image, int patch);

NormStats fit_norm_stats(const std::vector<TokenSequence>& dataset);
TokenSequence normalize(const TokenSequence& tokens, const NormStats& stats);
TokenSequence denormalize(const TokenSequence& tokens, const NormStats& stats);

std::vector<TokenSequence> make_synthetic(const SyntheticProcessSpec& spec,
                                          int length, int dim, int count,
                                          std::uint64_t seed);

// exact per-feature conditional entropy of the process, nats
double true_nll(const SyntheticProcessSpec& spec);

// Procedural grayscale shapes: class 0 = filled disk, 1 = square outline,
// 2 = cross; randomized position/scale plus pixel noise.
struct ShapesImage {
  ImageGrid image;
  int class_label = 0;
};
std::vector<ShapesImage> make_shapes_dataset(int num_images, int image_size,
                                             std::uint64_t seed);

// Dataset container: tokens [n, L, D] as f32 plus labels [n] as i32.
void save_dataset(const std::vector<TokenSequence>& dataset,
                  const std::string& path);
std::vector<TokenSequence> load_dataset(const std::string& path);

}  // namespace arinar
