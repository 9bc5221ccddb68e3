#pragma once

#include <json.hpp>
#include <set>
#include <string>

#include "arinar/data.hpp"
#include "arinar/errors.hpp"
#include "arinar/generate.hpp"
#include "arinar/model.hpp"
#include "arinar/training.hpp"

// JSON (de)serialization for the config types. Parsing is strict: unknown
// keys are rejected so a typo in a config file fails loudly instead of
// silently using a default.

namespace arinar {

namespace detail {

inline void check_keys(const nlohmann::json& j,
                       const std::set<std::string>& allowed,
                       const char* what) {
  if (!j.is_object()) {
    throw FormatError(std::string(what) + ": expected a JSON object");
  }
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.count(key)) {
      throw FormatError(std::string(what) + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace detail

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"outer_blocks", c.outer_blocks},
          {"inner_blocks", c.inner_blocks},
          {"width", c.width},
          {"num_heads", c.num_heads},
          {"mixture_components", c.mixture_components},
          {"seq_tokens", c.seq_tokens},
          {"token_dim", c.token_dim},
          {"num_classes", c.num_classes}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  detail::check_keys(j,
                     {"outer_blocks", "inner_blocks", "width", "num_heads",
                      "mixture_components", "seq_tokens", "token_dim",
                      "num_classes"},
                     "ModelConfig");
  ModelConfig c;
  detail::get_if(j, "outer_blocks", c.outer_blocks);
  detail::get_if(j, "inner_blocks", c.inner_blocks);
  detail::get_if(j, "width", c.width);
  detail::get_if(j, "num_heads", c.num_heads);
  detail::get_if(j, "mixture_components", c.mixture_components);
  detail::get_if(j, "seq_tokens", c.seq_tokens);
  detail::get_if(j, "token_dim", c.token_dim);
  detail::get_if(j, "num_classes", c.num_classes);
  c.validate();
  return c;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"epochs", c.epochs},
          {"warmup_epochs", c.warmup_epochs},
          {"batch_size", c.batch_size},
          {"label_dropout_prob", c.label_dropout_prob},
          {"grad_clip", c.grad_clip},
          {"seed", c.seed},
          {"log_every", c.log_every}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  detail::check_keys(
      j,
      {"learning_rate", "weight_decay", "adam_beta1", "adam_beta2",
       "adam_eps", "epochs", "warmup_epochs", "batch_size",
       "label_dropout_prob", "grad_clip", "seed", "log_every"},
      "TrainConfig");
  TrainConfig c;
  detail::get_if(j, "learning_rate", c.learning_rate);
  detail::get_if(j, "weight_decay", c.weight_decay);
  detail::get_if(j, "adam_beta1", c.adam_beta1);
  detail::get_if(j, "adam_beta2", c.adam_beta2);
  detail::get_if(j, "adam_eps", c.adam_eps);
  detail::get_if(j, "epochs", c.epochs);
  detail::get_if(j, "warmup_epochs", c.warmup_epochs);
  detail::get_if(j, "batch_size", c.batch_size);
  detail::get_if(j, "label_dropout_prob", c.label_dropout_prob);
  detail::get_if(j, "grad_clip", c.grad_clip);
  detail::get_if(j, "seed", c.seed);
  detail::get_if(j, "log_every", c.log_every);
  c.validate();
  return c;
}

inline nlohmann::json to_json(const SamplerConfig& c) {
  return {{"temperature", c.temperature},
          {"cfg_scale", c.cfg_scale},
          {"seed", c.seed},
          {"class_label", c.class_label},
          {"num_images", c.num_images}};
}

inline SamplerConfig sampler_config_from_json(const nlohmann::json& j) {
  detail::check_keys(
      j, {"temperature", "cfg_scale", "seed", "class_label", "num_images"},
      "SamplerConfig");
  SamplerConfig c;
  detail::get_if(j, "temperature", c.temperature);
  detail::get_if(j, "cfg_scale", c.cfg_scale);
  detail::get_if(j, "seed", c.seed);
  detail::get_if(j, "class_label", c.class_label);
  detail::get_if(j, "num_images", c.num_images);
  return c;
}

inline nlohmann::json to_json(const SyntheticProcessSpec& s) {
  return {{"num_classes", s.num_classes},
          {"within_coef", s.within_coef},
          {"across_coef", s.across_coef},
          {"base_mean", s.base_mean},
          {"noise_std", s.noise_std}};
}

inline SyntheticProcessSpec synthetic_spec_from_json(const nlohmann::json& j) {
  detail::check_keys(j,
                     {"num_classes", "within_coef", "across_coef", "base_mean",
                      "noise_std"},
                     "SyntheticProcessSpec");
  SyntheticProcessSpec s = SyntheticProcessSpec::defaults();
  detail::get_if(j, "num_classes", s.num_classes);
  detail::get_if(j, "within_coef", s.within_coef);
  detail::get_if(j, "across_coef", s.across_coef);
  detail::get_if(j, "base_mean", s.base_mean);
  detail::get_if(j, "noise_std", s.noise_std);
  s.validate();
  return s;
}

}  // namespace arinar
