#include "arinar/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "arinar/errors.hpp"

namespace arinar {

namespace {

constexpr double kLogSqrt2Pi = 0.9189385332046727;  // 0.5*ln(2*pi)

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

}  // namespace

void Gmm1D::validate() const {
  const std::size_t k = weights.size();
  if (k < 1 || means.size() != k || stds.size() != k) {
    throw ParamError("Gmm1D: weights/means/stds must share length K >= 1");
  }
  if (!all_finite(weights) || !all_finite(means) || !all_finite(stds)) {
    throw ParamError("Gmm1D: non-finite parameter");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw ParamError("Gmm1D: negative mixture weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ParamError("Gmm1D: weights must sum to 1");
  }
  for (double s : stds) {
    if (s < kMinStd) throw ParamError("Gmm1D: std below minimum");
  }
}

double Gmm1D::mean() const {
  double m = 0.0;
  for (int k = 0; k < components(); ++k) m += weights[k] * means[k];
  return m;
}

double Gmm1D::variance() const {
  const double m = mean();
  double second = 0.0;
  for (int k = 0; k < components(); ++k) {
    second += weights[k] * (stds[k] * stds[k] + means[k] * means[k]);
  }
  return second - m * m;
}

void GuidanceSpec::validate() const {
  if (!(scale >= 0.0) || !std::isfinite(scale)) {
    throw ParamError("GuidanceSpec: scale must be finite and >= 0");
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ParamError("GuidanceSpec: temperature must be finite and > 0");
  }
}

Gmm1D gmm_from_raw(const RawGmmOutput& raw) {
  const std::size_t k = raw.weight_logits.size();
  if (k < 1 || raw.means.size() != k || raw.log_stds.size() != k) {
    throw ParamError("RawGmmOutput: vectors must share length K >= 1");
  }
  if (!all_finite(raw.weight_logits) || !all_finite(raw.means) ||
      !all_finite(raw.log_stds)) {
    throw ParamError("RawGmmOutput: non-finite entry");
  }

  Gmm1D g;
  g.weights.resize(k);
  g.means = raw.means;
  g.stds.resize(k);

  const double max_logit =
      *std::max_element(raw.weight_logits.begin(), raw.weight_logits.end());
  double denom = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    g.weights[i] = std::exp(raw.weight_logits[i] - max_logit);
    denom += g.weights[i];
  }
  for (double& w : g.weights) w /= denom;

  for (std::size_t i = 0; i < k; ++i) {
    const double ls = std::clamp(raw.log_stds[i], kLogStdMin, kLogStdMax);
    g.stds[i] = std::max(std::exp(ls), kMinStd);
  }
  g.validate();
  return g;
}

double gmm_log_density(const Gmm1D& g, double x) {
  // log sum_k w_k N(x; mu_k, s_k^2) via log-sum-exp
  const int k = g.components();
  double max_term = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(k);
  for (int i = 0; i < k; ++i) {
    const double z = (x - g.means[i]) / g.stds[i];
    double t = -kLogSqrt2Pi - std::log(g.stds[i]) - 0.5 * z * z;
    t += g.weights[i] > 0.0 ? std::log(g.weights[i])
                            : -std::numeric_limits<double>::infinity();
    terms[i] = t;
    max_term = std::max(max_term, t);
  }
  if (!std::isfinite(max_term)) return max_term;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - max_term);
  return max_term + std::log(acc);
}

Gmm1D apply_temperature(const Gmm1D& g, double t) {
  if (!(t > 0.0) || !std::isfinite(t)) {
    throw ParamError("apply_temperature: t must be finite and > 0");
  }
  Gmm1D out = g;
  for (double& s : out.stds) s = std::max(s / t, kMinStd);
  return out;
}

double sample_gmm(const Gmm1D& g, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  int idx = g.components() - 1;
  for (int i = 0; i < g.components(); ++i) {
    acc += g.weights[i];
    if (u < acc) {
      idx = i;
      break;
    }
  }
  return g.means[idx] + g.stds[idx] * rng.normal();
}

namespace {

GuidedDensity build_guided(const Gmm1D& c, const Gmm1D& u, double w) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  double smax = 0.0;
  for (const Gmm1D* g : {&c, &u}) {
    for (double m : g->means) {
      lo = std::min(lo, m);
      hi = std::max(hi, m);
    }
    for (double s : g->stds) smax = std::max(smax, s);
  }
  lo -= kGuidanceSpanSigmas * smax;
  hi += kGuidanceSpanSigmas * smax;

  GuidedDensity out;
  const int n = kGuidanceGridPoints;
  out.grid.resize(n);
  out.density.resize(n);
  const double step = (hi - lo) / (n - 1);

  double peak = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const double x = lo + step * i;
    out.grid[i] = x;
    const double l = (1.0 + w) * gmm_log_density(c, x) -
                     w * gmm_log_density(u, x);
    out.density[i] = l;
    peak = std::max(peak, l);
  }
  double mass = 0.0;
  for (int i = 0; i < n; ++i) {
    const double l = std::clamp(out.density[i] - peak, -kGuidanceLogClamp,
                                kGuidanceLogClamp);
    out.density[i] = std::exp(l);
    if (i > 0) mass += 0.5 * (out.density[i - 1] + out.density[i]) * step;
  }
  if (!(mass > 0.0) || !std::isfinite(mass)) {
    throw ParamError("cfg_guided_sample: guided density is degenerate");
  }
  out.cdf.resize(n);
  out.cdf[0] = 0.0;
  for (int i = 1; i < n; ++i) {
    out.density[i - 1] /= mass;
    out.cdf[i] = out.cdf[i - 1] +
                 0.5 * (out.density[i - 1] + out.density[i] / mass) * step;
  }
  out.density[n - 1] /= mass;
  out.cdf[n - 1] = 1.0;  // trapezoid total is exactly the normalizer
  return out;
}

}  // namespace

double GuidedDensity::inverse_cdf(double u) const {
  const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
  if (it == cdf.begin()) return grid.front();
  if (it == cdf.end()) return grid.back();
  const std::size_t i = static_cast<std::size_t>(it - cdf.begin());
  const double c0 = cdf[i - 1];
  const double c1 = cdf[i];
  const double frac = c1 > c0 ? (u - c0) / (c1 - c0) : 0.0;
  return grid[i - 1] + frac * (grid[i] - grid[i - 1]);
}

GuidedDensity guided_density(const Gmm1D& g_cond, const Gmm1D& g_uncond,
                             const GuidanceSpec& spec) {
  g_cond.validate();
  g_uncond.validate();
  spec.validate();
  const Gmm1D c = apply_temperature(g_cond, spec.temperature);
  const Gmm1D u = apply_temperature(g_uncond, spec.temperature);
  return build_guided(c, u, spec.scale);
}

GuidedDensity gridded_density(const Gmm1D& g) {
  g.validate();
  return build_guided(g, g, 0.0);
}

double cfg_guided_sample(const Gmm1D& g_cond, const Gmm1D& g_uncond,
                         const GuidanceSpec& spec, Rng& rng) {
  const GuidedDensity d = guided_density(g_cond, g_uncond, spec);
  return d.inverse_cdf(rng.uniform());
}

}  // namespace arinar
