#include "arinar/training.hpp"

#include <atomic>
#include <cmath>
#include <future>
#include <numeric>
#include <ostream>
#include <thread>

#include "arinar/config_json.hpp"
#include "arinar/container.hpp"
#include "arinar/errors.hpp"

namespace arinar {

namespace {

constexpr int kGradChunk = 8;  // sequences per reduction chunk, fixed for
                               // thread-count-independent determinism

Mat prefix_matrix(const TokenSequence& seq, const ModelConfig& cfg) {
  Mat prefix(cfg.seq_tokens - 1, cfg.token_dim);
  for (int t = 0; t + 1 < cfg.seq_tokens; ++t) {
    for (int i = 0; i < cfg.token_dim; ++i) prefix(t, i) = seq.at(t, i);
  }
  return prefix;
}

// Builds the full teacher-forced loss graph for one sequence and returns
// the summed NLL node (over L*D features).
Tape::Ref sequence_nll_tape(Tape& tape, const BoundParams& bound,
                            const ModelConfig& cfg, const TokenSequence& seq,
                            int label) {
  const Tape::Ref z = outer_forward_tape(tape, bound, cfg,
                                         prefix_matrix(seq, cfg), label);
  Tape::Ref total{};
  for (int t = 0; t < cfg.seq_tokens; ++t) {
    Eigen::VectorXd features(cfg.token_dim);
    for (int i = 0; i < cfg.token_dim; ++i) features(i) = seq.at(t, i);
    const Tape::Ref raw = inner_forward_tape(
        tape, bound, cfg, tape.row(z, t), features.head(cfg.token_dim - 1));
    const Tape::Ref nll =
        tape.gmm_nll(raw, features, cfg.mixture_components);
    total = total.valid() ? tape.add(total, nll) : nll;
  }
  return total;
}

std::vector<int> effective_labels(const ModelConfig& cfg,
                                  const std::vector<TokenSequence>& batch,
                                  double dropout_prob, Rng* dropout_rng) {
  std::vector<int> labels(batch.size());
  for (std::size_t s = 0; s < batch.size(); ++s) {
    int label = batch[s].class_label;
    if (label < 0 || label > cfg.null_class()) {
      throw ShapeError("nll_loss: class label out of range");
    }
    if (dropout_prob > 0.0 && dropout_rng &&
        dropout_rng->uniform() < dropout_prob) {
      label = cfg.null_class();
    }
    labels[s] = label;
  }
  return labels;
}

struct ChunkResult {
  double nll_sum = 0.0;  // summed over sequences, per-feature normalized
  GradMap grads;         // summed over sequences
};

ChunkResult process_chunk(const ModelParams& params, const ModelConfig& cfg,
                          const std::vector<TokenSequence>& batch,
                          const std::vector<int>& labels, std::size_t first,
                          std::size_t last, bool with_grads) {
  ChunkResult res;
  const double per_feature =
      1.0 / (static_cast<double>(cfg.seq_tokens) * cfg.token_dim);
  for (std::size_t s = first; s < last; ++s) {
    const auto& seq = batch[s];
    if (seq.length != cfg.seq_tokens || seq.dim != cfg.token_dim) {
      throw ShapeError("nll_loss: sequence shape mismatch");
    }
    Tape tape;
    const BoundParams bound = bind_params(tape, params);
    Tape::Ref loss = sequence_nll_tape(tape, bound, cfg, seq, labels[s]);
    loss = tape.scale(loss, per_feature);
    res.nll_sum += tape.val(loss)(0, 0);
    if (with_grads) {
      tape.backward(loss);
      for (const auto& [name, ref] : bound.refs) {
        auto it = res.grads.find(name);
        if (it == res.grads.end()) {
          res.grads.emplace(name, tape.grad(ref));
        } else {
          it->second += tape.grad(ref);
        }
      }
    }
  }
  return res;
}

std::pair<double, GradMap> batch_pass(const ModelParams& params,
                                      const ModelConfig& cfg,
                                      const std::vector<TokenSequence>& batch,
                                      const std::vector<int>& labels,
                                      bool with_grads) {
  if (batch.empty()) throw Error("nll_loss: empty batch");

  const std::size_t n = batch.size();
  const std::size_t num_chunks = (n + kGradChunk - 1) / kGradChunk;
  std::vector<ChunkResult> results(num_chunks);

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  const std::size_t workers = std::min<std::size_t>(
      num_chunks, std::max(1u, std::thread::hardware_concurrency()));
  auto run = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= num_chunks || failed.load()) return;
      const std::size_t first = c * kGradChunk;
      const std::size_t last = std::min(n, first + kGradChunk);
      try {
        results[c] =
            process_chunk(params, cfg, batch, labels, first, last, with_grads);
      } catch (...) {
        failed.store(true);
        throw;
      }
    }
  };
  if (workers <= 1) {
    run();
  } else {
    std::vector<std::future<void>> futures;
    for (std::size_t w = 0; w < workers; ++w) {
      futures.push_back(std::async(std::launch::async, run));
    }
    for (auto& f : futures) f.get();
  }

  double nll_sum = 0.0;
  GradMap grads;
  // chunk-order reduction, independent of completion order
  for (auto& res : results) {
    nll_sum += res.nll_sum;
    for (auto& [name, g] : res.grads) {
      auto it = grads.find(name);
      if (it == grads.end()) {
        grads.emplace(name, std::move(g));
      } else {
        it->second += g;
      }
    }
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  const double loss = nll_sum * inv_n;
  if (!std::isfinite(loss)) {
    throw DivergenceError("nll_loss: non-finite loss (" +
                          std::to_string(loss) + ")");
  }
  if (with_grads) {
    for (auto& [name, g] : grads) {
      g *= inv_n;
      if (!g.allFinite()) {
        throw DivergenceError("compute_gradients: non-finite gradient in '" +
                              name + "'");
      }
    }
  }
  return {loss, std::move(grads)};
}

}  // namespace

TrainConfig TrainConfig::full_preset() {
  TrainConfig c;
  c.learning_rate = 1e-4;
  c.weight_decay = 0.02;
  c.adam_beta1 = 0.9;
  c.adam_beta2 = 0.95;
  c.epochs = 400;
  c.warmup_epochs = 100;
  c.batch_size = 256;
  c.label_dropout_prob = 0.1;
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !(adam_eps > 0.0) || weight_decay < 0.0 ||
      !(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ParamError("TrainConfig: bad optimizer settings");
  }
  if (epochs < 0 || warmup_epochs < 0 || batch_size < 1 || log_every < 1 ||
      grad_clip < 0.0) {
    throw ParamError("TrainConfig: bad loop settings");
  }
  if (!(label_dropout_prob >= 0.0 && label_dropout_prob <= 1.0)) {
    throw ParamError("TrainConfig: label_dropout_prob must be in [0,1]");
  }
}

double nll_loss(const ModelParams& params, const ModelConfig& cfg,
                const std::vector<TokenSequence>& batch, double dropout_prob,
                Rng* dropout_rng) {
  const auto labels = effective_labels(cfg, batch, dropout_prob, dropout_rng);
  return batch_pass(params, cfg, batch, labels, false).first;
}

std::pair<double, GradMap> compute_gradients(
    const ModelParams& params, const ModelConfig& cfg,
    const std::vector<TokenSequence>& batch, double dropout_prob,
    Rng* dropout_rng) {
  const auto labels = effective_labels(cfg, batch, dropout_prob, dropout_rng);
  return batch_pass(params, cfg, batch, labels, true);
}

double gradcheck(const ModelParams& params, const ModelConfig& cfg,
                 const std::vector<TokenSequence>& batch, double epsilon,
                 std::uint64_t seed, int min_coords) {
  if (!(epsilon > 0.0)) throw ParamError("gradcheck: epsilon must be > 0");

  const auto [loss, grads] = compute_gradients(params, cfg, batch);
  (void)loss;

  // at least one coordinate per tensor, topped up to min_coords
  Rng rng(seed);
  std::vector<std::pair<std::string, Eigen::Index>> coords;
  std::vector<std::string> names;
  for (const auto& [name, t] : params.tensors) {
    names.push_back(name);
    coords.emplace_back(
        name, static_cast<Eigen::Index>(
                  rng.below(static_cast<std::uint64_t>(t.size()))));
  }
  while (coords.size() < static_cast<std::size_t>(min_coords)) {
    const auto& name = names[rng.below(names.size())];
    const auto& t = params.tensors.at(name);
    coords.emplace_back(
        name, static_cast<Eigen::Index>(
                  rng.below(static_cast<std::uint64_t>(t.size()))));
  }

  ModelParams perturbed = params;
  double max_rel = 0.0;
  for (const auto& [name, flat] : coords) {
    double* slot = perturbed.at(name).data() + flat;
    const double original = *slot;

    *slot = original + epsilon;
    const double up = nll_loss(perturbed, cfg, batch);
    *slot = original - epsilon;
    const double down = nll_loss(perturbed, cfg, batch);
    *slot = original;

    const double numeric = (up - down) / (2.0 * epsilon);
    const double analytic = *(grads.at(name).data() + flat);
    const double rel = std::abs(analytic - numeric) /
                       std::max(1e-8, std::abs(analytic) + std::abs(numeric));
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

void adamw_update(OptimizerState& state, ModelParams& params,
                  const GradMap& grads, const TrainConfig& cfg,
                  double learning_rate) {
  if (state.first_moment.empty()) {
    for (const auto& [name, t] : params.tensors) {
      state.first_moment.emplace(name, Mat::Zero(t.rows(), t.cols()));
      state.second_moment.emplace(name, Mat::Zero(t.rows(), t.cols()));
    }
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, state.step);
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, state.step);

  double clip_scale = 1.0;
  if (cfg.grad_clip > 0.0) {
    double sq = 0.0;
    for (const auto& [name, g] : grads) sq += g.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > cfg.grad_clip) clip_scale = cfg.grad_clip / norm;
  }

  for (auto& [name, theta] : params.tensors) {
    const Mat g = grads.at(name) * clip_scale;
    Mat& m = state.first_moment.at(name);
    Mat& v = state.second_moment.at(name);
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
    v = cfg.adam_beta2 * v.array() +
        (1.0 - cfg.adam_beta2) * g.array().square();
    const auto m_hat = m.array() / bc1;
    const auto v_hat = v.array() / bc2;
    theta.array() -= learning_rate * (m_hat / (v_hat.sqrt() + cfg.adam_eps) +
                                      cfg.weight_decay * theta.array());
  }
}

double lr_at(double epoch, const TrainConfig& cfg) {
  if (epoch < 0.0) throw ParamError("lr_at: epoch must be >= 0");
  if (cfg.warmup_epochs > 0 && epoch < cfg.warmup_epochs) {
    return cfg.learning_rate * (epoch / cfg.warmup_epochs);
  }
  return cfg.learning_rate;
}

Checkpoint train(const TrainConfig& train_cfg, const ModelConfig& model_cfg,
                 const std::vector<TokenSequence>& dataset,
                 const NormStats& norm, std::ostream* log) {
  train_cfg.validate();
  model_cfg.validate();
  if (dataset.empty()) throw Error("train: empty dataset");

  ModelParams params = init_params(model_cfg, train_cfg.seed);
  OptimizerState opt;
  Rng shuffle_rng = Rng::substream(train_cfg.seed, 1);
  Rng dropout_rng = Rng::substream(train_cfg.seed, 2);

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  const auto steps_per_epoch = static_cast<double>(
      (dataset.size() + train_cfg.batch_size - 1) / train_cfg.batch_size);

  std::int64_t global_step = 0;
  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    // Fisher-Yates with the run's own generator
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    }
    int step = 0;
    for (std::size_t first = 0; first < order.size();
         first += static_cast<std::size_t>(train_cfg.batch_size)) {
      const std::size_t last = std::min(
          order.size(), first + static_cast<std::size_t>(train_cfg.batch_size));
      std::vector<TokenSequence> batch;
      batch.reserve(last - first);
      for (std::size_t i = first; i < last; ++i) batch.push_back(dataset[order[i]]);

      const double lr =
          lr_at(epoch + static_cast<double>(step) / steps_per_epoch, train_cfg);
      auto [loss, grads] = compute_gradients(
          params, model_cfg, batch, train_cfg.label_dropout_prob, &dropout_rng);
      adamw_update(opt, params, grads, train_cfg, lr);

      if (log && global_step % train_cfg.log_every == 0) {
        (*log) << "{\"event\":\"train_step\",\"epoch\":" << epoch
               << ",\"step\":" << global_step << ",\"loss\":" << loss
               << ",\"lr\":" << lr << "}\n";
      }
      ++step;
      ++global_step;
    }
  }

  Checkpoint ckpt;
  ckpt.model_cfg = model_cfg;
  ckpt.train_cfg = train_cfg;
  ckpt.params = std::move(params);
  ckpt.opt = std::move(opt);
  ckpt.norm = norm;
  ckpt.rng_descriptor = nlohmann::json{{"generator", "xoshiro256++"},
                                       {"seed", train_cfg.seed}}
                            .dump();
  return ckpt;
}

namespace {

std::vector<double> to_row_major(const Mat& m) {
  std::vector<double> out(static_cast<std::size_t>(m.size()));
  std::size_t idx = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[idx++] = m(r, c);
  }
  return out;
}

Mat from_row_major(const std::vector<double>& v, std::uint64_t rows,
                   std::uint64_t cols, const std::string& what) {
  if (v.size() != rows * cols) {
    throw FormatError("checkpoint: size mismatch in " + what);
  }
  Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::size_t idx = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = v[idx++];
  }
  return m;
}

void put_mat(Container& c, const std::string& name, const Mat& m) {
  c.put_f64(name,
            {static_cast<std::uint64_t>(m.rows()),
             static_cast<std::uint64_t>(m.cols())},
            to_row_major(m));
}

Mat get_mat(const Container& c, const std::string& name) {
  const Entry& e = c.at(name);
  if (e.dtype != Dtype::F64 || e.dims.size() != 2) {
    throw FormatError("checkpoint: '" + name + "' must be f64 of rank 2");
  }
  return from_row_major(e.f64, e.dims[0], e.dims[1], name);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  Container c;
  c.put_bytes("config/model", to_json(ckpt.model_cfg).dump());
  c.put_bytes("config/train", to_json(ckpt.train_cfg).dump());
  c.put_bytes("rng", ckpt.rng_descriptor);
  for (const auto& [name, t] : ckpt.params.tensors) {
    put_mat(c, "param/" + name, t);
  }
  if (ckpt.opt) {
    for (const auto& [name, m] : ckpt.opt->first_moment) {
      put_mat(c, "opt/m/" + name, m);
    }
    for (const auto& [name, v] : ckpt.opt->second_moment) {
      put_mat(c, "opt/v/" + name, v);
    }
    c.put_i32("opt/step", {1},
              {static_cast<std::int32_t>(ckpt.opt->step)});
  }
  c.put_f64("norm/mean", {ckpt.norm.mean.size()}, ckpt.norm.mean);
  c.put_f64("norm/std", {ckpt.norm.std.size()}, ckpt.norm.std);
  c.save(path);
}

Checkpoint load_checkpoint(const std::string& path) {
  const Container c = Container::load(path);
  Checkpoint ckpt;
  try {
    ckpt.model_cfg = model_config_from_json(
        nlohmann::json::parse(c.at("config/model").bytes));
    ckpt.train_cfg = train_config_from_json(
        nlohmann::json::parse(c.at("config/train").bytes));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad config JSON: ") + e.what());
  }
  ckpt.rng_descriptor = c.at("rng").bytes;

  for (const auto& [name, rows, cols] : parameter_manifest(ckpt.model_cfg)) {
    Mat t = get_mat(c, "param/" + name);
    if (t.rows() != rows || t.cols() != cols) {
      throw FormatError("checkpoint: shape mismatch for '" + name + "'");
    }
    if (!t.allFinite()) {
      throw FormatError("checkpoint: non-finite values in '" + name + "'");
    }
    ckpt.params.tensors.emplace(name, std::move(t));
  }

  if (c.has("opt/step")) {
    OptimizerState opt;
    opt.step = c.at("opt/step").i32.at(0);
    for (const auto& [name, t] : ckpt.params.tensors) {
      (void)t;
      opt.first_moment.emplace(name, get_mat(c, "opt/m/" + name));
      opt.second_moment.emplace(name, get_mat(c, "opt/v/" + name));
    }
    ckpt.opt = std::move(opt);
  }

  const Entry& mean = c.at("norm/mean");
  const Entry& stdv = c.at("norm/std");
  if (mean.dtype != Dtype::F64 || stdv.dtype != Dtype::F64) {
    throw FormatError("checkpoint: norm stats must be f64");
  }
  ckpt.norm.mean = mean.f64;
  ckpt.norm.std = stdv.f64;
  return ckpt;
}

}  // namespace arinar
