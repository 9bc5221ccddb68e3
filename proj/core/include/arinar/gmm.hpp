#pragma once

#include <vector>

#include "arinar/rng.hpp"

namespace arinar {

// One-dimensional K-component Gaussian mixture, the model head's output
// distribution for a single scalar feature.
struct Gmm1D {
  std::vector<double> weights;  // sum to 1, each >= 0
  std::vector<double> means;
  std::vector<double> stds;  // each >= kMinStd

  int components() const { return static_cast<int>(weights.size()); }
  void validate() const;  // throws ParamError on invariant violation

  double mean() const;
  double variance() const;
};

// Raw head output before squashing: weights via softmax, stds via
// exp(clamped log-std).
struct RawGmmOutput {
  std::vector<double> weight_logits;
  std::vector<double> means;
  std::vector<double> log_stds;
};

// Sampling knobs: temperature divides every std; guidance scale w combines
// conditional and unconditional densities as p_c^(1+w) * p_u^(-w).
struct GuidanceSpec {
  double scale = 0.0;
  double temperature = 1.0;
  void validate() const;
};

inline constexpr double kMinStd = 1e-6;
inline constexpr double kLogStdMin = -7.0;
inline constexpr double kLogStdMax = 2.0;

Gmm1D gmm_from_raw(const RawGmmOutput& raw);

double gmm_log_density(const Gmm1D& g, double x);

// stds divided by t; means and weights untouched
Gmm1D apply_temperature(const Gmm1D& g, double t);

// component index ~ Categorical(weights), then a normal draw
double sample_gmm(const Gmm1D& g, Rng& rng);

// Classifier-free-guided draw. Temperature is applied to both mixtures
// first; the tilted log-density (1+w)*log p_c - w*log p_u is evaluated on a
// uniform grid, normalized by trapezoidal quadrature, and sampled by
// inverse-CDF with linear interpolation. w=0 reduces to tempered
// conditional sampling (up to grid resolution).
double cfg_guided_sample(const Gmm1D& g_cond, const Gmm1D& g_uncond,
                         const GuidanceSpec& spec, Rng& rng);

// Grid used by cfg_guided_sample, exposed for density/CDF diagnostics.
struct GuidedDensity {
  std::vector<double> grid;     // uniform, kGuidanceGridPoints points
  std::vector<double> density;  // normalized, trapezoid integral == 1
  std::vector<double> cdf;      // cdf.front()==0, cdf.back()==1
  double inverse_cdf(double u) const;
};

inline constexpr int kGuidanceGridPoints = 4096;
inline constexpr double kGuidanceSpanSigmas = 8.0;
inline constexpr double kGuidanceLogClamp = 30.0;

GuidedDensity guided_density(const Gmm1D& g_cond, const Gmm1D& g_uncond,
                             const GuidanceSpec& spec);

// Gridded density/CDF of a single mixture (w=0 guidance against itself);
// used by distributional acceptance checks.
GuidedDensity gridded_density(const Gmm1D& g);

}  // namespace arinar
