#include "arinar/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "arinar/container.hpp"
#include "arinar/errors.hpp"

namespace arinar {

SyntheticProcessSpec SyntheticProcessSpec::defaults() {
  SyntheticProcessSpec s;
  s.num_classes = 2;
  s.within_coef = {0.5, -0.5};
  s.across_coef = {0.3, 0.3};
  s.base_mean = {1.0, -1.0};
  s.noise_std = 0.5;
  return s;
}

void SyntheticProcessSpec::validate() const {
  const auto n = static_cast<std::size_t>(num_classes);
  if (num_classes < 1 || within_coef.size() != n || across_coef.size() != n ||
      base_mean.size() != n) {
    throw ParamError("SyntheticProcessSpec: per-class vectors must match");
  }
  if (!(noise_std > 0.0)) {
    throw ParamError("SyntheticProcessSpec: noise_std must be > 0");
  }
  for (std::size_t c = 0; c < n; ++c) {
    if (std::abs(within_coef[c]) >= 1.0 || std::abs(across_coef[c]) >= 1.0) {
      throw ParamError("SyntheticProcessSpec: |a_c| and |b_c| must be < 1");
    }
  }
}

TokenSequence patchify(const ImageGrid& image, int patch) {
  if (patch < 1 || image.height % patch != 0 || image.width % patch != 0) {
    throw ShapeError("patchify: image dimensions must be divisible by patch");
  }
  const int rows = image.height / patch;
  const int cols = image.width / patch;
  TokenSequence out;
  out.length = rows * cols;
  out.dim = patch * patch * image.channels;
  out.values.resize(static_cast<std::size_t>(out.length) * out.dim);

  // raster order over patches, then row-major within a patch
  for (int pr = 0; pr < rows; ++pr) {
    for (int pc = 0; pc < cols; ++pc) {
      const int t = pr * cols + pc;
      int i = 0;
      for (int y = 0; y < patch; ++y) {
        for (int x = 0; x < patch; ++x) {
          for (int ch = 0; ch < image.channels; ++ch) {
            const std::size_t src =
                (static_cast<std::size_t>(pr * patch + y) * image.width +
                 (pc * patch + x)) *
                    image.channels +
                ch;
            out.at(t, i++) = image.pixels[src];
          }
        }
      }
    }
  }
  return out;
}

ImageGrid unpatchify(const TokenSequence& tokens, int height, int width,
                     int channels, int patch) {
  if (patch < 1 || height % patch != 0 || width % patch != 0) {
    throw ShapeError("unpatchify: dimensions must be divisible by patch");
  }
  const int rows = height / patch;
  const int cols = width / patch;
  if (tokens.length != rows * cols || tokens.dim != patch * patch * channels) {
    throw ShapeError("unpatchify: token shape inconsistent with image shape");
  }
  ImageGrid img;
  img.height = height;
  img.width = width;
  img.channels = channels;
  img.pixels.resize(static_cast<std::size_t>(height) * width * channels);

  for (int pr = 0; pr < rows; ++pr) {
    for (int pc = 0; pc < cols; ++pc) {
      const int t = pr * cols + pc;
      int i = 0;
      for (int y = 0; y < patch; ++y) {
        for (int x = 0; x < patch; ++x) {
          for (int ch = 0; ch < channels; ++ch) {
            const std::size_t dst =
                (static_cast<std::size_t>(pr * patch + y) * width +
                 (pc * patch + x)) *
                    channels +
                ch;
            img.pixels[dst] = tokens.at(t, i++);
          }
        }
      }
    }
  }
  return img;
}

NormStats fit_norm_stats(const std::vector<TokenSequence>& dataset) {
  if (dataset.empty()) throw Error("fit_norm_stats: empty dataset");
  const int d = dataset.front().dim;
  NormStats stats;
  stats.mean.assign(d, 0.0);
  stats.std.assign(d, 0.0);

  std::size_t count = 0;
  for (const auto& seq : dataset) {
    if (seq.dim != d) throw ShapeError("fit_norm_stats: mixed feature dims");
    for (int t = 0; t < seq.length; ++t) {
      for (int i = 0; i < d; ++i) stats.mean[i] += seq.at(t, i);
    }
    count += static_cast<std::size_t>(seq.length);
  }
  for (auto& m : stats.mean) m /= static_cast<double>(count);

  for (const auto& seq : dataset) {
    for (int t = 0; t < seq.length; ++t) {
      for (int i = 0; i < d; ++i) {
        const double delta = seq.at(t, i) - stats.mean[i];
        stats.std[i] += delta * delta;
      }
    }
  }
  for (auto& s : stats.std) {
    s = std::max(std::sqrt(s / static_cast<double>(count)), 1e-6);
  }
  return stats;
}

TokenSequence normalize(const TokenSequence& tokens, const NormStats& stats) {
  if (static_cast<int>(stats.mean.size()) != tokens.dim ||
      static_cast<int>(stats.std.size()) != tokens.dim) {
    throw ShapeError("normalize: stats dimension mismatch");
  }
  TokenSequence out = tokens;
  for (int t = 0; t < out.length; ++t) {
    for (int i = 0; i < out.dim; ++i) {
      out.at(t, i) = (out.at(t, i) - stats.mean[i]) / stats.std[i];
    }
  }
  return out;
}

TokenSequence denormalize(const TokenSequence& tokens, const NormStats& stats) {
  if (static_cast<int>(stats.mean.size()) != tokens.dim ||
      static_cast<int>(stats.std.size()) != tokens.dim) {
    throw ShapeError("denormalize: stats dimension mismatch");
  }
  TokenSequence out = tokens;
  for (int t = 0; t < out.length; ++t) {
    for (int i = 0; i < out.dim; ++i) {
      out.at(t, i) = out.at(t, i) * stats.std[i] + stats.mean[i];
    }
  }
  return out;
}

std::vector<TokenSequence> make_synthetic(const SyntheticProcessSpec& spec,
                                          int length, int dim, int count,
                                          std::uint64_t seed) {
  spec.validate();
  std::vector<TokenSequence> out;
  out.reserve(static_cast<std::size_t>(count));

  for (int n = 0; n < count; ++n) {
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(n));
    TokenSequence seq;
    seq.length = length;
    seq.dim = dim;
    seq.values.resize(static_cast<std::size_t>(length) * dim);
    const int c = static_cast<int>(rng.below(
        static_cast<std::uint64_t>(spec.num_classes)));
    seq.class_label = c;
    const double a = spec.within_coef[static_cast<std::size_t>(c)];
    const double b = spec.across_coef[static_cast<std::size_t>(c)];
    const double mu = spec.base_mean[static_cast<std::size_t>(c)];

    for (int t = 0; t < length; ++t) {
      for (int i = 0; i < dim; ++i) {
        double prev = 0.0;  // previous feature in generation order
        if (i > 0) {
          prev = seq.at(t, i - 1);
        } else if (t > 0) {
          prev = seq.at(t - 1, dim - 1);
        }
        const double lag = t > 0 ? seq.at(t - 1, i) : 0.0;
        const double base = (t == 0 && i == 0) ? mu : 0.0;
        seq.at(t, i) = base + a * prev + b * lag + spec.noise_std * rng.normal();
      }
    }
    out.push_back(std::move(seq));
  }
  return out;
}

double true_nll(const SyntheticProcessSpec& spec) {
  spec.validate();
  const double var = spec.noise_std * spec.noise_std;
  return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * var);
}

namespace {

void render_shape(ImageGrid& img, int cls, double cx, double cy, double r) {
  const auto size = img.width;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double dx = x + 0.5 - cx;
      const double dy = y + 0.5 - cy;
      bool on = false;
      switch (cls) {
        case 0:  // filled disk
          on = dx * dx + dy * dy <= r * r;
          break;
        case 1:  // square outline
          on = std::abs(dx) <= r && std::abs(dy) <= r &&
               !(std::abs(dx) <= r * 0.55 && std::abs(dy) <= r * 0.55);
          break;
        default:  // cross
          on = (std::abs(dx) <= r * 0.35 && std::abs(dy) <= r) ||
               (std::abs(dy) <= r * 0.35 && std::abs(dx) <= r);
          break;
      }
      if (on) img.pixels[static_cast<std::size_t>(y) * size + x] = 1.0;
    }
  }
}

}  // namespace

std::vector<ShapesImage> make_shapes_dataset(int num_images, int image_size,
                                             std::uint64_t seed) {
  std::vector<ShapesImage> out;
  out.reserve(static_cast<std::size_t>(num_images));
  const double s = image_size;

  for (int n = 0; n < num_images; ++n) {
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(n));
    ShapesImage item;
    item.class_label = static_cast<int>(rng.below(3));
    item.image.height = image_size;
    item.image.width = image_size;
    item.image.channels = 1;
    item.image.pixels.assign(static_cast<std::size_t>(image_size) * image_size,
                             0.0);

    const double r = s * (0.24 + 0.06 * rng.uniform());
    const double cx = s * 0.5 + (rng.uniform() - 0.5) * (s * 0.125);
    const double cy = s * 0.5 + (rng.uniform() - 0.5) * (s * 0.125);
    render_shape(item.image, item.class_label, cx, cy, r);

    for (auto& p : item.image.pixels) {
      p = std::clamp(p + 0.05 * rng.normal(), 0.0, 1.0);
    }
    out.push_back(std::move(item));
  }
  return out;
}

void save_dataset(const std::vector<TokenSequence>& dataset,
                  const std::string& path) {
  if (dataset.empty()) throw Error("save_dataset: empty dataset");
  const auto n = dataset.size();
  const int length = dataset.front().length;
  const int dim = dataset.front().dim;

  std::vector<float> tokens;
  tokens.reserve(n * static_cast<std::size_t>(length) * dim);
  std::vector<std::int32_t> labels;
  labels.reserve(n);
  for (const auto& seq : dataset) {
    if (seq.length != length || seq.dim != dim) {
      throw ShapeError("save_dataset: inconsistent sequence shapes");
    }
    for (double v : seq.values) tokens.push_back(static_cast<float>(v));
    labels.push_back(seq.class_label);
  }

  Container c;
  c.put_f32("tokens",
            {n, static_cast<std::uint64_t>(length),
             static_cast<std::uint64_t>(dim)},
            std::move(tokens));
  c.put_i32("labels", {n}, std::move(labels));
  c.save(path);
}

std::vector<TokenSequence> load_dataset(const std::string& path) {
  const Container c = Container::load(path);
  const Entry& tokens = c.at("tokens");
  const Entry& labels = c.at("labels");
  if (tokens.dtype != Dtype::F32 || tokens.dims.size() != 3) {
    throw FormatError("dataset: 'tokens' must be f32 of rank 3");
  }
  if (labels.dtype != Dtype::I32 || labels.dims.size() != 1 ||
      labels.dims[0] != tokens.dims[0]) {
    throw FormatError("dataset: 'labels' must be i32 [n]");
  }
  const auto n = static_cast<std::size_t>(tokens.dims[0]);
  const int length = static_cast<int>(tokens.dims[1]);
  const int dim = static_cast<int>(tokens.dims[2]);

  std::vector<TokenSequence> out(n);
  std::size_t off = 0;
  for (std::size_t s = 0; s < n; ++s) {
    out[s].length = length;
    out[s].dim = dim;
    out[s].class_label = labels.i32[s];
    out[s].values.resize(static_cast<std::size_t>(length) * dim);
    for (auto& v : out[s].values) v = tokens.f32[off++];
  }
  return out;
}

}  // namespace arinar
