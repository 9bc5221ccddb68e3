#include "arinar/generate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "arinar/config_json.hpp"
#include "arinar/errors.hpp"

namespace arinar {

void SamplerConfig::validate(const ModelConfig& cfg) const {
  if (!(temperature > 0.0)) {
    throw ParamError("SamplerConfig: temperature must be > 0");
  }
  if (!(cfg_scale >= 0.0)) {
    throw ParamError("SamplerConfig: cfg_scale must be >= 0");
  }
  if (class_label < 0 || class_label >= cfg.num_classes) {
    throw ParamError("SamplerConfig: class label out of range");
  }
  if (num_images < 0) {
    throw ParamError("SamplerConfig: num_images must be >= 0");
  }
}

namespace {

Gmm1D gmm_at(const Mat& raw, Eigen::Index row, int k) {
  RawGmmOutput o;
  o.weight_logits.resize(static_cast<std::size_t>(k));
  o.means.resize(static_cast<std::size_t>(k));
  o.log_stds.resize(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    o.weight_logits[static_cast<std::size_t>(j)] = raw(row, j);
    o.means[static_cast<std::size_t>(j)] = raw(row, k + j);
    o.log_stds[static_cast<std::size_t>(j)] = raw(row, 2 * k + j);
  }
  return gmm_from_raw(o);
}

}  // namespace

Eigen::VectorXd generate_token(const ModelParams& params,
                               const ModelConfig& cfg, const Mat& z_cond,
                               const Mat* z_uncond,
                               const SamplerConfig& sampler, Rng& rng) {
  const bool guided = sampler.cfg_scale > 0.0;
  if (guided && z_uncond == nullptr) {
    throw ParamError("generate_token: guidance needs an unconditional z");
  }

  Tape tape;
  const BoundParams bound = bind_params(tape, params);
  const Tape::Ref zc = tape.constant(z_cond);
  const Tape::Ref zu = guided ? tape.constant(*z_uncond) : Tape::Ref{};

  Eigen::VectorXd features(cfg.token_dim);
  const int k = cfg.mixture_components;
  for (int i = 0; i < cfg.token_dim; ++i) {
    const Eigen::VectorXd prefix = features.head(i);
    const Mat raw_c =
        tape.val(inner_forward_tape(tape, bound, cfg, zc, prefix));
    const Gmm1D g_cond = gmm_at(raw_c, i, k);

    if (guided) {
      const Mat raw_u =
          tape.val(inner_forward_tape(tape, bound, cfg, zu, prefix));
      const GuidanceSpec spec{sampler.cfg_scale, sampler.temperature};
      features(i) = cfg_guided_sample(g_cond, gmm_at(raw_u, i, k), spec, rng);
    } else {
      features(i) = sample_gmm(apply_temperature(g_cond, sampler.temperature),
                               rng);
    }
  }
  return features;
}

TokenSequence generate_sequence(const ModelParams& params,
                                const ModelConfig& cfg,
                                const SamplerConfig& sampler, Rng& rng,
                                GenStats* stats) {
  sampler.validate(cfg);
  const bool guided = sampler.cfg_scale > 0.0;

  TokenSequence seq;
  seq.length = cfg.seq_tokens;
  seq.dim = cfg.token_dim;
  seq.class_label = sampler.class_label;
  seq.values.resize(static_cast<std::size_t>(cfg.seq_tokens) * cfg.token_dim);

  Mat prefix(0, cfg.token_dim);
  for (int t = 0; t < cfg.seq_tokens; ++t) {
    Tape tape;
    const BoundParams bound = bind_params(tape, params);
    const Mat z_all_c = tape.val(outer_forward_tape(
        tape, bound, cfg, prefix, sampler.class_label));
    const Mat z_c = z_all_c.row(t);
    Mat z_u;
    if (guided) {
      z_u = tape.val(outer_forward_tape(tape, bound, cfg, prefix,
                                        cfg.null_class()))
                .row(t);
    }
    if (stats) {
      stats->outer_passes += guided ? 2 : 1;
      stats->inner_passes += cfg.token_dim * (guided ? 2 : 1);
    }

    const Eigen::VectorXd token = generate_token(
        params, cfg, z_c, guided ? &z_u : nullptr, sampler, rng);
    for (int i = 0; i < cfg.token_dim; ++i) seq.at(t, i) = token(i);

    prefix.conservativeResize(t + 1, cfg.token_dim);
    prefix.row(t) = token.transpose();
  }
  return seq;
}

void write_ppm(const ImageGrid& image, const std::string& path) {
  if (image.channels != 1 && image.channels != 3) {
    throw ShapeError("write_ppm: only 1 or 3 channels supported");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("write_ppm: cannot open '" + path + "'");
  os << "P6\n" << image.width << " " << image.height << "\n255\n";
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const int ch = image.channels == 1 ? 0 : c;
        const double v = image.pixels[(static_cast<std::size_t>(y) *
                                           image.width +
                                       x) *
                                          image.channels +
                                      ch];
        const double clamped = std::clamp(v, 0.0, 1.0);
        os.put(static_cast<char>(
            static_cast<int>(std::lround(clamped * 255.0))));
      }
    }
  }
  if (!os) throw Error("write_ppm: write failed for '" + path + "'");
}

namespace {

ImageGrid tile_grid(const std::vector<ImageGrid>& images) {
  const int n = static_cast<int>(images.size());
  const int cols = static_cast<int>(std::ceil(std::sqrt(n)));
  const int rows = (n + cols - 1) / cols;
  const int h = images.front().height;
  const int w = images.front().width;

  ImageGrid grid;
  grid.height = rows * h;
  grid.width = cols * w;
  grid.channels = 1;
  grid.pixels.assign(static_cast<std::size_t>(grid.height) * grid.width, 0.0);
  for (int i = 0; i < n; ++i) {
    const int r0 = (i / cols) * h;
    const int c0 = (i % cols) * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        grid.pixels[static_cast<std::size_t>(r0 + y) * grid.width + c0 + x] =
            images[static_cast<std::size_t>(i)]
                .pixels[static_cast<std::size_t>(y) * w + x];
      }
    }
  }
  return grid;
}

// FNV-1a over the serialized parameter bytes, recorded in the run sidecar
std::string params_hash(const ModelParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [name, t] : params.tensors) {
    for (char c : name) {
      h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ull;
    }
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      std::uint64_t bits;
      const double v = *(t.data() + i);
      std::memcpy(&bits, &v, sizeof(bits));
      for (int b = 0; b < 8; ++b) {
        h = (h ^ ((bits >> (8 * b)) & 0xff)) * 0x100000001b3ull;
      }
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

std::vector<ImageGrid> generate_images(const Checkpoint& ckpt,
                                       const SamplerConfig& sampler,
                                       const std::string& out_dir) {
  const ModelConfig& cfg = ckpt.model_cfg;
  sampler.validate(cfg);
  if (ckpt.norm.mean.size() != static_cast<std::size_t>(cfg.token_dim)) {
    throw FormatError("generate_images: checkpoint lacks tokenizer stats");
  }

  const int patch = static_cast<int>(std::lround(std::sqrt(cfg.token_dim)));
  const int side_patches =
      static_cast<int>(std::lround(std::sqrt(cfg.seq_tokens)));
  if (patch * patch != cfg.token_dim ||
      side_patches * side_patches != cfg.seq_tokens) {
    throw ShapeError("generate_images: non-square token geometry");
  }
  const int image_size = patch * side_patches;

  std::filesystem::create_directories(out_dir);
  std::vector<ImageGrid> images;
  images.reserve(static_cast<std::size_t>(sampler.num_images));

  for (int i = 0; i < sampler.num_images; ++i) {
    Rng rng = Rng::substream(sampler.seed, static_cast<std::uint64_t>(i));
    const TokenSequence tokens =
        generate_sequence(ckpt.params, cfg, sampler, rng);
    ImageGrid img = unpatchify(denormalize(tokens, ckpt.norm), image_size,
                               image_size, 1, patch);
    for (auto& p : img.pixels) p = std::clamp(p, 0.0, 1.0);
    write_ppm(img, out_dir + "/sample_" + std::to_string(sampler.class_label) +
                       "_" + std::to_string(i) + ".ppm");
    images.push_back(std::move(img));
  }

  if (!images.empty()) {
    write_ppm(tile_grid(images), out_dir + "/grid.ppm");
  }

  nlohmann::json sidecar{{"sampler", to_json(sampler)},
                         {"checkpoint_hash", params_hash(ckpt.params)}};
  std::ofstream os(out_dir + "/run.json");
  os << sidecar.dump(2) << "\n";
  return images;
}

}  // namespace arinar
