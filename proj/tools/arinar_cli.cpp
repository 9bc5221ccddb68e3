// Command-line entry point: dataset generation, training, sampling,
// held-out NLL evaluation, gradient checking and the generation-speed
// benchmark. Every subcommand is reproducible from its JSON config plus
// seed.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "arinar/config_json.hpp"
#include "arinar/data.hpp"
#include "arinar/errors.hpp"
#include "arinar/eval.hpp"
#include "arinar/generate.hpp"
#include "arinar/model.hpp"
#include "arinar/training.hpp"

namespace {

using nlohmann::json;

struct DataSpec {
  std::string kind = "synthetic";  // "synthetic" | "shapes"
  arinar::SyntheticProcessSpec synthetic =
      arinar::SyntheticProcessSpec::defaults();
  int count = 1000;
  std::uint64_t seed = 7;
  int image_size = 16;
  int patch = 4;
  std::string path;  // optional pre-built dataset container
};

struct RunConfig {
  arinar::ModelConfig model;
  arinar::TrainConfig train;
  DataSpec data;
};

DataSpec data_spec_from_json(const json& j) {
  arinar::detail::check_keys(j,
                             {"kind", "synthetic", "count", "seed",
                              "image_size", "patch", "path"},
                             "DataSpec");
  DataSpec d;
  arinar::detail::get_if(j, "kind", d.kind);
  if (d.kind != "synthetic" && d.kind != "shapes") {
    throw arinar::FormatError("DataSpec: kind must be synthetic or shapes");
  }
  if (j.contains("synthetic")) {
    d.synthetic = arinar::synthetic_spec_from_json(j.at("synthetic"));
  }
  arinar::detail::get_if(j, "count", d.count);
  arinar::detail::get_if(j, "seed", d.seed);
  arinar::detail::get_if(j, "image_size", d.image_size);
  arinar::detail::get_if(j, "patch", d.patch);
  arinar::detail::get_if(j, "path", d.path);
  return d;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw arinar::Error("cannot open config '" + path + "'");
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw arinar::FormatError("config parse error: " + std::string(e.what()));
  }
  arinar::detail::check_keys(j, {"model", "train", "data"}, "RunConfig");

  RunConfig cfg;
  if (j.contains("model")) {
    cfg.model = arinar::model_config_from_json(j.at("model"));
  }
  if (j.contains("train")) {
    cfg.train = arinar::train_config_from_json(j.at("train"));
  }
  if (j.contains("data")) cfg.data = data_spec_from_json(j.at("data"));
  return cfg;
}

std::vector<arinar::TokenSequence> build_dataset(const RunConfig& cfg) {
  if (!cfg.data.path.empty()) return arinar::load_dataset(cfg.data.path);
  if (cfg.data.kind == "synthetic") {
    return arinar::make_synthetic(cfg.data.synthetic, cfg.model.seq_tokens,
                                  cfg.model.token_dim, cfg.data.count,
                                  cfg.data.seed);
  }
  const auto shapes = arinar::make_shapes_dataset(
      cfg.data.count, cfg.data.image_size, cfg.data.seed);
  std::vector<arinar::TokenSequence> out;
  out.reserve(shapes.size());
  for (const auto& s : shapes) {
    arinar::TokenSequence seq = arinar::patchify(s.image, cfg.data.patch);
    seq.class_label = s.class_label;
    out.push_back(std::move(seq));
  }
  return out;
}

void emit(bool as_json, const json& payload, const std::string& text) {
  if (as_json) {
    std::cout << payload.dump() << "\n";
  } else {
    std::cout << text << "\n";
  }
}

int run(int argc, char** argv) {
  CLI::App app{"bi-level autoregressive GMM image model"};
  app.require_subcommand(1);
  bool as_json = false;
  app.add_flag("--json", as_json, "machine-readable JSON line output");

  // train
  auto* cmd_train = app.add_subcommand("train", "train a model");
  std::string train_config, train_out, train_data;
  cmd_train->add_option("--config", train_config)->required();
  cmd_train->add_option("--out", train_out)->required();
  cmd_train->add_option("--data", train_data, "override dataset container");

  // sample
  auto* cmd_sample = app.add_subcommand("sample", "generate images");
  std::string sample_ckpt, sample_out = "samples";
  arinar::SamplerConfig sampler;
  cmd_sample->add_option("--ckpt", sample_ckpt)->required();
  cmd_sample->add_option("--class", sampler.class_label);
  cmd_sample->add_option("--num", sampler.num_images);
  cmd_sample->add_option("--temperature", sampler.temperature);
  cmd_sample->add_option("--cfg-scale", sampler.cfg_scale);
  cmd_sample->add_option("--seed", sampler.seed);
  cmd_sample->add_option("--out", sample_out);

  // eval-nll
  auto* cmd_eval = app.add_subcommand("eval-nll", "held-out NLL");
  std::string eval_ckpt, eval_data;
  cmd_eval->add_option("--ckpt", eval_ckpt)->required();
  cmd_eval->add_option("--data", eval_data)->required();

  // bench
  auto* cmd_bench = app.add_subcommand("bench", "generation speed benchmark");
  std::string bench_ckpt;
  int bench_images = 10;
  int bench_stub_steps = 100;
  std::uint64_t bench_seed = 0;
  cmd_bench->add_option("--ckpt", bench_ckpt)->required();
  cmd_bench->add_option("--images", bench_images);
  cmd_bench->add_option("--stub-steps", bench_stub_steps);
  cmd_bench->add_option("--seed", bench_seed);

  // gradcheck
  auto* cmd_grad = app.add_subcommand("gradcheck", "finite-difference audit");
  std::string grad_config;
  double grad_eps = 1e-4;
  int grad_batch = 2;
  cmd_grad->add_option("--config", grad_config)->required();
  cmd_grad->add_option("--epsilon", grad_eps);
  cmd_grad->add_option("--batch", grad_batch);

  // make-data
  auto* cmd_data = app.add_subcommand("make-data", "emit a dataset container");
  std::string data_config, data_out;
  cmd_data->add_option("--config", data_config)->required();
  cmd_data->add_option("--out", data_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints usage/help
    return code == 0 ? 0 : 1;
  }

  if (cmd_train->parsed()) {
    RunConfig cfg = load_run_config(train_config);
    if (!train_data.empty()) cfg.data.path = train_data;
    const auto raw = build_dataset(cfg);
    const arinar::NormStats norm = arinar::fit_norm_stats(raw);
    std::vector<arinar::TokenSequence> dataset;
    dataset.reserve(raw.size());
    for (const auto& seq : raw) dataset.push_back(arinar::normalize(seq, norm));

    arinar::Checkpoint ckpt =
        arinar::train(cfg.train, cfg.model, dataset, norm,
                      as_json ? &std::cout : nullptr);
    arinar::save_checkpoint(ckpt, train_out);
    emit(as_json,
         {{"event", "trained"},
          {"checkpoint", train_out},
          {"sequences", dataset.size()},
          {"parameters", arinar::count_parameters(ckpt.params)}},
         "wrote checkpoint " + train_out);
  } else if (cmd_sample->parsed()) {
    const arinar::Checkpoint ckpt = arinar::load_checkpoint(sample_ckpt);
    const auto images = arinar::generate_images(ckpt, sampler, sample_out);
    emit(as_json,
         {{"event", "sampled"},
          {"images", images.size()},
          {"out_dir", sample_out}},
         "wrote " + std::to_string(images.size()) + " images to " +
             sample_out);
  } else if (cmd_eval->parsed()) {
    const arinar::Checkpoint ckpt = arinar::load_checkpoint(eval_ckpt);
    const auto dataset = arinar::load_dataset(eval_data);
    const double nll = arinar::eval_nll(ckpt, dataset);
    emit(as_json, {{"event", "eval_nll"}, {"nll_per_feature", nll}},
         "nll/feature = " + std::to_string(nll));
  } else if (cmd_bench->parsed()) {
    const arinar::Checkpoint ckpt = arinar::load_checkpoint(bench_ckpt);
    const arinar::BenchReport r =
        arinar::speed_bench(ckpt, bench_images, bench_stub_steps, bench_seed);
    emit(as_json,
         {{"event", "bench"},
          {"seconds_per_image", r.seconds_per_image},
          {"inner_head_us_per_feature",
           r.inner_head_microseconds_per_feature},
          {"stub_seconds_per_image", r.stub_seconds_per_image},
          {"speedup_ratio", r.speedup_ratio},
          {"stub_steps", r.stub_steps},
          {"num_images", r.num_images},
          {"threads", r.threads},
          {"precision", r.precision}},
         "actual " + std::to_string(r.seconds_per_image) + " s/image, stub " +
             std::to_string(r.stub_seconds_per_image) + " s/image, speedup " +
             std::to_string(r.speedup_ratio) + "x");
  } else if (cmd_grad->parsed()) {
    RunConfig cfg = load_run_config(grad_config);
    cfg.data.count = grad_batch;
    const auto raw = build_dataset(cfg);
    const arinar::NormStats norm = arinar::fit_norm_stats(raw);
    std::vector<arinar::TokenSequence> batch;
    for (const auto& seq : raw) batch.push_back(arinar::normalize(seq, norm));
    const arinar::ModelParams params =
        arinar::init_params(cfg.model, cfg.train.seed);
    const double err =
        arinar::gradcheck(params, cfg.model, batch, grad_eps);
    emit(as_json, {{"event", "gradcheck"}, {"max_rel_error", err}},
         "gradcheck max relative error = " + std::to_string(err));
  } else if (cmd_data->parsed()) {
    const RunConfig cfg = load_run_config(data_config);
    const auto dataset = build_dataset(cfg);
    arinar::save_dataset(dataset, data_out);
    emit(as_json,
         {{"event", "dataset"},
          {"sequences", dataset.size()},
          {"out", data_out}},
         "wrote " + std::to_string(dataset.size()) + " sequences to " +
             data_out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const arinar::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
