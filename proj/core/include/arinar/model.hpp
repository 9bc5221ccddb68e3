#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "arinar/data.hpp"
#include "arinar/gmm.hpp"
#include "arinar/tape.hpp"

namespace arinar {

// Bi-level architecture: an outer token-level causal transformer emits one
// condition vector z per token; an inner feature-level causal transformer,
// modulated by z through AdaLN, emits raw GMM parameters per scalar
// feature.
struct ModelConfig {
  int outer_blocks = 4;
  int inner_blocks = 1;
  int width = 64;
  int num_heads = 4;
  int mixture_components = 4;  // K
  int seq_tokens = 16;         // L, tokens per image
  int token_dim = 16;          // D, features per token
  int num_classes = 3;

  int null_class() const { return num_classes; }
  void validate() const;
};

// Named parameter store. The manifest (names, shapes and their
// lexicographic order) is the portable checkpoint contract; see
// docs/parameter_manifest.md.
struct ModelParams {
  std::map<std::string, Mat> tensors;

  const Mat& at(const std::string& name) const;
  Mat& at(const std::string& name);
};

// manifest as (name, rows, cols) in storage order
std::vector<std::tuple<std::string, int, int>> parameter_manifest(
    const ModelConfig& cfg);

// truncated-normal(0.02) weights, zero biases, zero AdaLN modulation maps
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

std::int64_t count_parameters(const ModelParams& params);

// ---- tape-level forward passes (gradient-capable) ----

struct BoundParams {
  std::map<std::string, Tape::Ref> refs;
  Tape::Ref at(const std::string& name) const;
};
BoundParams bind_params(Tape& tape, const ModelParams& params);

// prefix_tokens is [n, D] with n <= L-1 teacher-forced tokens; the returned
// node is [n+1, width]: row i is z_i conditioning token i.
Tape::Ref outer_forward_tape(Tape& tape, const BoundParams& p,
                             const ModelConfig& cfg, const Mat& prefix_tokens,
                             int class_label);

// feature_prefix holds the first n <= D-1 scalars of one token; the
// returned node is [n+1, 3K]: row i parameterizes feature i.
Tape::Ref inner_forward_tape(Tape& tape, const BoundParams& p,
                             const ModelConfig& cfg, Tape::Ref z,
                             const Eigen::VectorXd& feature_prefix);

// ---- value-level wrappers ----

// standard multi-head causal self-attention on already-projected q/k/v
Mat attention(const Mat& q, const Mat& k, const Mat& v, int num_heads);

// layer-norm then (1 + gamma(z)) * h + beta(z), with [gamma|beta] = z *
// ada_w + ada_b
Mat adaln_modulate(const Mat& h, const Mat& z_row, const Mat& ada_w,
                   const Mat& ada_b);

// z_i per token for a full teacher-forced sequence, [L, width]
Mat outer_forward(const ModelParams& params, const ModelConfig& cfg,
                  const TokenSequence& tokens, int class_label);

// raw GMM outputs for every feature of one token under condition z
std::vector<RawGmmOutput> inner_forward(const ModelParams& params,
                                        const ModelConfig& cfg,
                                        const Mat& z_row,
                                        const Eigen::VectorXd& features);

}  // namespace arinar
