#include "arinar/model.hpp"

#include <cmath>

#include "arinar/errors.hpp"
#include "arinar/rng.hpp"

namespace arinar {

namespace {

constexpr double kLnEps = 1e-6;
constexpr double kInitStd = 0.02;

double trunc_normal(Rng& rng, double std_dev) {
  // resample outside +/- 2 std
  double x;
  do {
    x = rng.normal();
  } while (std::abs(x) > 2.0);
  return x * std_dev;
}

}  // namespace

void ModelConfig::validate() const {
  if (width < 1 || num_heads < 1 || width % num_heads != 0) {
    throw ParamError("ModelConfig: width must be divisible by num_heads");
  }
  if (mixture_components < 1 || outer_blocks < 1 || inner_blocks < 1 ||
      seq_tokens < 1 || token_dim < 1 || num_classes < 1) {
    throw ParamError("ModelConfig: counts must be >= 1");
  }
}

const Mat& ModelParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ParamError("missing parameter '" + name + "'");
  return it->second;
}

Mat& ModelParams::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ParamError("missing parameter '" + name + "'");
  return it->second;
}

std::vector<std::tuple<std::string, int, int>> parameter_manifest(
    const ModelConfig& cfg) {
  cfg.validate();
  const int w = cfg.width;
  const int hidden = 4 * w;
  std::vector<std::tuple<std::string, int, int>> m;

  m.emplace_back("class_emb", cfg.num_classes + 1, w);
  m.emplace_back("outer.token_embed.w", cfg.token_dim, w);
  m.emplace_back("outer.token_embed.b", 1, w);
  m.emplace_back("outer.pos", cfg.seq_tokens, w);
  for (int b = 0; b < cfg.outer_blocks; ++b) {
    const std::string p = "outer.block" + std::to_string(b) + ".";
    m.emplace_back(p + "ln1.g", 1, w);
    m.emplace_back(p + "ln1.b", 1, w);
    for (const char* n : {"wq", "wk", "wv", "wo"}) {
      m.emplace_back(p + "attn." + n, w, w);
    }
    for (const char* n : {"bq", "bk", "bv", "bo"}) {
      m.emplace_back(p + "attn." + n, 1, w);
    }
    m.emplace_back(p + "ln2.g", 1, w);
    m.emplace_back(p + "ln2.b", 1, w);
    m.emplace_back(p + "mlp.w1", w, hidden);
    m.emplace_back(p + "mlp.b1", 1, hidden);
    m.emplace_back(p + "mlp.w2", hidden, w);
    m.emplace_back(p + "mlp.b2", 1, w);
  }
  m.emplace_back("outer.lnf.g", 1, w);
  m.emplace_back("outer.lnf.b", 1, w);

  m.emplace_back("inner.bot", 1, w);
  m.emplace_back("inner.feat_embed.w", 1, w);
  m.emplace_back("inner.feat_embed.b", 1, w);
  m.emplace_back("inner.pos", cfg.token_dim, w);
  for (int b = 0; b < cfg.inner_blocks; ++b) {
    const std::string p = "inner.block" + std::to_string(b) + ".";
    m.emplace_back(p + "ada1.w", w, 2 * w);
    m.emplace_back(p + "ada1.b", 1, 2 * w);
    for (const char* n : {"wq", "wk", "wv", "wo"}) {
      m.emplace_back(p + "attn." + n, w, w);
    }
    for (const char* n : {"bq", "bk", "bv", "bo"}) {
      m.emplace_back(p + "attn." + n, 1, w);
    }
    m.emplace_back(p + "ada2.w", w, 2 * w);
    m.emplace_back(p + "ada2.b", 1, 2 * w);
    m.emplace_back(p + "mlp.w1", w, hidden);
    m.emplace_back(p + "mlp.b1", 1, hidden);
    m.emplace_back(p + "mlp.w2", hidden, w);
    m.emplace_back(p + "mlp.b2", 1, w);
  }
  m.emplace_back("inner.adaf.w", w, 2 * w);
  m.emplace_back("inner.adaf.b", 1, 2 * w);
  m.emplace_back("inner.head.w", w, 3 * cfg.mixture_components);
  m.emplace_back("inner.head.b", 1, 3 * cfg.mixture_components);
  return m;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_zero_init(const std::string& name) {
  // biases, LN shifts and AdaLN modulation maps (so inner blocks start as
  // near-identity modulation) start at zero
  if (name == "inner.bot") return false;
  const auto base = name.substr(name.find_last_of('.') + 1);
  if (!base.empty() && base[0] == 'b') return true;
  return name.find(".ada") != std::string::npos;
}

bool is_one_init(const std::string& name) {
  return ends_with(name, "ln1.g") || ends_with(name, "ln2.g") ||
         ends_with(name, "lnf.g");
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  ModelParams params;
  for (const auto& [name, rows, cols] : parameter_manifest(cfg)) {
    Mat t(rows, cols);
    if (is_zero_init(name)) {
      t.setZero();
    } else if (is_one_init(name)) {
      t.setOnes();
    } else {
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) t(r, c) = trunc_normal(rng, kInitStd);
      }
    }
    params.tensors.emplace(name, std::move(t));
  }
  return params;
}

std::int64_t count_parameters(const ModelParams& params) {
  std::int64_t n = 0;
  for (const auto& [name, t] : params.tensors) n += t.size();
  return n;
}

BoundParams bind_params(Tape& tape, const ModelParams& params) {
  BoundParams bound;
  for (const auto& [name, t] : params.tensors) {
    bound.refs.emplace(name, tape.leaf(t));
  }
  return bound;
}

Tape::Ref BoundParams::at(const std::string& name) const {
  auto it = refs.find(name);
  if (it == refs.end()) throw ParamError("unbound parameter '" + name + "'");
  return it->second;
}

namespace {

Tape::Ref linear(Tape& t, Tape::Ref x, Tape::Ref w, Tape::Ref b) {
  return t.add_rowvec(t.matmul(x, w), b);
}

Tape::Ref outer_block(Tape& t, const BoundParams& p, const std::string& prefix,
                      Tape::Ref h, int num_heads) {
  Tape::Ref n1 = t.add_rowvec(
      t.mul_rowvec(t.layernorm(h, kLnEps), p.at(prefix + "ln1.g")),
      p.at(prefix + "ln1.b"));
  Tape::Ref q = linear(t, n1, p.at(prefix + "attn.wq"), p.at(prefix + "attn.bq"));
  Tape::Ref k = linear(t, n1, p.at(prefix + "attn.wk"), p.at(prefix + "attn.bk"));
  Tape::Ref v = linear(t, n1, p.at(prefix + "attn.wv"), p.at(prefix + "attn.bv"));
  Tape::Ref attn = linear(t, t.causal_attention(q, k, v, num_heads),
                          p.at(prefix + "attn.wo"), p.at(prefix + "attn.bo"));
  h = t.add(h, attn);

  Tape::Ref n2 = t.add_rowvec(
      t.mul_rowvec(t.layernorm(h, kLnEps), p.at(prefix + "ln2.g")),
      p.at(prefix + "ln2.b"));
  Tape::Ref mlp = linear(
      t, t.gelu(linear(t, n2, p.at(prefix + "mlp.w1"), p.at(prefix + "mlp.b1"))),
      p.at(prefix + "mlp.w2"), p.at(prefix + "mlp.b2"));
  return t.add(h, mlp);
}

// AdaLN: LN(h) * (1 + gamma(z)) + beta(z) with [gamma|beta] = z*W + b
Tape::Ref adaln(Tape& t, Tape::Ref h, Tape::Ref z, Tape::Ref ada_w,
                Tape::Ref ada_b, int width) {
  Tape::Ref gb = linear(t, z, ada_w, ada_b);  // [1, 2*width]
  Tape::Ref gamma = t.slice_cols(gb, 0, width);
  Tape::Ref beta = t.slice_cols(gb, width, width);
  Tape::Ref scaled =
      t.mul_rowvec(t.layernorm(h, kLnEps), t.add_scalar(gamma, 1.0));
  return t.add_rowvec(scaled, beta);
}

Tape::Ref inner_block(Tape& t, const BoundParams& p, const std::string& prefix,
                      Tape::Ref h, Tape::Ref z, int num_heads, int width) {
  Tape::Ref n1 =
      adaln(t, h, z, p.at(prefix + "ada1.w"), p.at(prefix + "ada1.b"), width);
  Tape::Ref q = linear(t, n1, p.at(prefix + "attn.wq"), p.at(prefix + "attn.bq"));
  Tape::Ref k = linear(t, n1, p.at(prefix + "attn.wk"), p.at(prefix + "attn.bk"));
  Tape::Ref v = linear(t, n1, p.at(prefix + "attn.wv"), p.at(prefix + "attn.bv"));
  Tape::Ref attn = linear(t, t.causal_attention(q, k, v, num_heads),
                          p.at(prefix + "attn.wo"), p.at(prefix + "attn.bo"));
  h = t.add(h, attn);

  Tape::Ref n2 =
      adaln(t, h, z, p.at(prefix + "ada2.w"), p.at(prefix + "ada2.b"), width);
  Tape::Ref mlp = linear(
      t, t.gelu(linear(t, n2, p.at(prefix + "mlp.w1"), p.at(prefix + "mlp.b1"))),
      p.at(prefix + "mlp.w2"), p.at(prefix + "mlp.b2"));
  return t.add(h, mlp);
}

}  // namespace

Tape::Ref outer_forward_tape(Tape& tape, const BoundParams& p,
                             const ModelConfig& cfg, const Mat& prefix_tokens,
                             int class_label) {
  const auto n = prefix_tokens.rows();
  if (n > cfg.seq_tokens - 1 ||
      (n > 0 && prefix_tokens.cols() != cfg.token_dim)) {
    throw ShapeError("outer_forward: bad token prefix shape");
  }
  if (class_label < 0 || class_label > cfg.null_class()) {
    throw ShapeError("outer_forward: class label out of range");
  }

  Tape::Ref h = tape.row(p.at("class_emb"), class_label);
  if (n > 0) {
    Tape::Ref emb = linear(tape, tape.constant(prefix_tokens),
                           p.at("outer.token_embed.w"),
                           p.at("outer.token_embed.b"));
    h = tape.concat_rows(h, emb);
  }
  h = tape.add(h, tape.slice_rows(p.at("outer.pos"), 0,
                                  static_cast<int>(n) + 1));
  for (int b = 0; b < cfg.outer_blocks; ++b) {
    h = outer_block(tape, p, "outer.block" + std::to_string(b) + ".", h,
                    cfg.num_heads);
  }
  return tape.add_rowvec(
      tape.mul_rowvec(tape.layernorm(h, kLnEps), p.at("outer.lnf.g")),
      p.at("outer.lnf.b"));
}

Tape::Ref inner_forward_tape(Tape& tape, const BoundParams& p,
                             const ModelConfig& cfg, Tape::Ref z,
                             const Eigen::VectorXd& feature_prefix) {
  const auto n = feature_prefix.size();
  if (n > cfg.token_dim - 1) {
    throw ShapeError("inner_forward: feature prefix too long");
  }

  Tape::Ref h = p.at("inner.bot");
  if (n > 0) {
    // scalar -> width affine embedding of each already-generated feature
    Tape::Ref f = tape.constant(feature_prefix);
    Tape::Ref emb = linear(tape, f, p.at("inner.feat_embed.w"),
                           p.at("inner.feat_embed.b"));
    h = tape.concat_rows(h, emb);
  }
  h = tape.add(h, tape.slice_rows(p.at("inner.pos"), 0,
                                  static_cast<int>(n) + 1));
  for (int b = 0; b < cfg.inner_blocks; ++b) {
    h = inner_block(tape, p, "inner.block" + std::to_string(b) + ".", h, z,
                    cfg.num_heads, cfg.width);
  }
  h = adaln(tape, h, z, p.at("inner.adaf.w"), p.at("inner.adaf.b"), cfg.width);
  return linear(tape, h, p.at("inner.head.w"), p.at("inner.head.b"));
}

Mat attention(const Mat& q, const Mat& k, const Mat& v, int num_heads) {
  Tape t;
  return t.val(t.causal_attention(t.constant(q), t.constant(k), t.constant(v),
                                  num_heads));
}

Mat adaln_modulate(const Mat& h, const Mat& z_row, const Mat& ada_w,
                   const Mat& ada_b) {
  Tape t;
  return t.val(adaln(t, t.constant(h), t.constant(z_row), t.constant(ada_w),
                     t.constant(ada_b), static_cast<int>(h.cols())));
}

Mat outer_forward(const ModelParams& params, const ModelConfig& cfg,
                  const TokenSequence& tokens, int class_label) {
  if (tokens.length != cfg.seq_tokens || tokens.dim != cfg.token_dim) {
    throw ShapeError("outer_forward: sequence shape mismatch");
  }
  Mat prefix(cfg.seq_tokens - 1, cfg.token_dim);
  for (int t = 0; t + 1 < cfg.seq_tokens; ++t) {
    for (int i = 0; i < cfg.token_dim; ++i) prefix(t, i) = tokens.at(t, i);
  }
  Tape tape;
  const BoundParams bound = bind_params(tape, params);
  return tape.val(outer_forward_tape(tape, bound, cfg, prefix, class_label));
}

std::vector<RawGmmOutput> inner_forward(const ModelParams& params,
                                        const ModelConfig& cfg,
                                        const Mat& z_row,
                                        const Eigen::VectorXd& features) {
  Tape tape;
  const BoundParams bound = bind_params(tape, params);
  Eigen::VectorXd prefix = features.head(std::min<Eigen::Index>(
      features.size(), cfg.token_dim - 1));
  const Mat raw = tape.val(inner_forward_tape(
      tape, bound, cfg, tape.constant(z_row), prefix));

  const int k = cfg.mixture_components;
  std::vector<RawGmmOutput> out(static_cast<std::size_t>(raw.rows()));
  for (Eigen::Index r = 0; r < raw.rows(); ++r) {
    auto& o = out[static_cast<std::size_t>(r)];
    o.weight_logits.resize(static_cast<std::size_t>(k));
    o.means.resize(static_cast<std::size_t>(k));
    o.log_stds.resize(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
      o.weight_logits[static_cast<std::size_t>(j)] = raw(r, j);
      o.means[static_cast<std::size_t>(j)] = raw(r, k + j);
      o.log_stds[static_cast<std::size_t>(j)] = raw(r, 2 * k + j);
    }
  }
  return out;
}

}  // namespace arinar
