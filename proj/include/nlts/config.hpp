#pragma once

// RunConfig <-> JSON. Keys missing from the input keep their current value,
// so a file can override just a few fields of a preset.

#include <fstream>
#include <string>

#include "json.hpp"
#include "nlts/error.hpp"
#include "nlts/harness.hpp"

namespace nlts {

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["policy"] = to_string(c.policy);
  j["env"] = c.env;
  j["horizon"] = c.horizon;
  j["seed"] = c.seed;
  j["train"] = {{"interval", c.train.interval},
                {"minibatches", c.train.minibatches},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"decay", c.train.decay},
                {"epsilon", c.train.epsilon}};
  j["hidden"] = c.hidden;
  j["buffer_capacity"] = c.buffer_capacity;
  j["noise"] = {{"a0", c.noise.a0}, {"b0", c.noise.b0}, {"lambda0", c.noise.lambda0}};
  j["solver"] = {{"max_iters", c.solver.max_iters},
                 {"step_rule", c.solver.step_rule == StepRule::kFixed ? "fixed"
                                                                      : "backtracking"},
                 {"tolerance", c.solver.tolerance},
                 {"ridge", c.solver.ridge}};
  j["mean_prior"] = c.mean_prior == MeanPriorMode::kLinearMatching
                        ? "linear-matching"
                        : "last-layer";
  j["epsilon"] = c.epsilon;
  j["linear_intercept"] = c.linear_intercept;
  j["bias_feature"] = c.bias_feature;
  j["restart_noise"] = c.restart_noise == NoiseRestart::kCarry ? "carry" : "from-buffer";
  if (c.fixed_noise_variance)
    j["fixed_noise_variance"] = *c.fixed_noise_variance;
  else
    j["fixed_noise_variance"] = nullptr;
  return j;
}

namespace detail {

template <class T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline void apply_json(const nlohmann::json& j, RunConfig& c) {
  try {
    if (j.contains("policy")) c.policy = parse_policy(j.at("policy").get<std::string>());
    detail::read_key(j, "env", c.env);
    detail::read_key(j, "horizon", c.horizon);
    detail::read_key(j, "seed", c.seed);
    if (j.contains("train")) {
      const auto& t = j.at("train");
      detail::read_key(t, "interval", c.train.interval);
      detail::read_key(t, "minibatches", c.train.minibatches);
      detail::read_key(t, "batch_size", c.train.batch_size);
      detail::read_key(t, "learning_rate", c.train.learning_rate);
      detail::read_key(t, "decay", c.train.decay);
      detail::read_key(t, "epsilon", c.train.epsilon);
    }
    detail::read_key(j, "hidden", c.hidden);
    detail::read_key(j, "buffer_capacity", c.buffer_capacity);
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      detail::read_key(n, "a0", c.noise.a0);
      detail::read_key(n, "b0", c.noise.b0);
      detail::read_key(n, "lambda0", c.noise.lambda0);
    }
    if (j.contains("solver")) {
      const auto& s = j.at("solver");
      detail::read_key(s, "max_iters", c.solver.max_iters);
      detail::read_key(s, "tolerance", c.solver.tolerance);
      detail::read_key(s, "ridge", c.solver.ridge);
      if (s.contains("step_rule")) {
        const auto rule = s.at("step_rule").get<std::string>();
        require(rule == "fixed" || rule == "backtracking", ErrorCode::kInvalidParameter,
                "solver.step_rule must be fixed or backtracking");
        c.solver.step_rule = rule == "fixed" ? StepRule::kFixed : StepRule::kBacktracking;
      }
    }
    if (j.contains("mean_prior")) {
      const auto mode = j.at("mean_prior").get<std::string>();
      require(mode == "last-layer" || mode == "linear-matching",
              ErrorCode::kInvalidParameter,
              "mean_prior must be last-layer or linear-matching");
      c.mean_prior = mode == "linear-matching" ? MeanPriorMode::kLinearMatching
                                               : MeanPriorMode::kLastLayerWeights;
    }
    detail::read_key(j, "epsilon", c.epsilon);
    detail::read_key(j, "linear_intercept", c.linear_intercept);
    detail::read_key(j, "bias_feature", c.bias_feature);
    if (j.contains("restart_noise")) {
      const auto mode = j.at("restart_noise").get<std::string>();
      require(mode == "carry" || mode == "from-buffer", ErrorCode::kInvalidParameter,
              "restart_noise must be carry or from-buffer");
      c.restart_noise = mode == "carry" ? NoiseRestart::kCarry : NoiseRestart::kFromRows;
    }
    if (j.contains("fixed_noise_variance")) {
      const auto& v = j.at("fixed_noise_variance");
      if (v.is_null())
        c.fixed_noise_variance.reset();
      else
        c.fixed_noise_variance = v.get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParseError, std::string("config: ") + e.what());
  }
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream is(path);
  require(bool(is), ErrorCode::kIo, "cannot open " + path);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParseError, path + ": " + e.what());
  }
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  std::string env = RunConfig{}.env;
  Policy policy = RunConfig{}.policy;
  if (j.contains("env")) env = j.at("env").get<std::string>();
  if (j.contains("policy")) policy = parse_policy(j.at("policy").get<std::string>());
  RunConfig c = default_config(policy, env);
  apply_json(j, c);
  return c;
}

}  // namespace nlts
