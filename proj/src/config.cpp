// SPDX-License-Identifier: Apache-2.0
#include "tsiars/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "tsiars/error.hpp"

namespace tsiars::config {

using nlohmann::json;
using trainer::TrainConfig;

namespace {

template <typename V>
V get_as(const json& value, const std::string& key) {
  try {
    return value.get<V>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type: " + value.dump());
  }
}

std::size_t get_count(const json& value, const std::string& key) {
  if (!value.is_number_integer() || value.get<long long>() < 0) {
    throw ConfigError("config key '" + key + "' must be a non-negative integer");
  }
  return value.get<std::size_t>();
}

using Setter = std::function<void(const json&, TrainConfig&)>;

void apply_section(const json& j, TrainConfig& cfg, const std::map<std::string, Setter>& setters,
                   const std::string& prefix) {
  if (!j.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + prefix + key + "'");
    it->second(value, cfg);
  }
}

}  // namespace

json to_json(const TrainConfig& c) {
  return json{
      {"mode", trainer::to_string(c.mode)},
      {"learning_rate", c.learning_rate},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"mask_prob", c.mask_prob},
      {"min_overlap_pow", c.min_overlap_pow},
      {"normalize", c.normalize},
      {"seed", c.seed},
      {"precision", trainer::to_string(c.precision)},
      {"threads", c.threads},
      {"loss",
       {{"alpha", c.loss.alpha},
        {"pool", numerics::to_string(c.loss.pool_mode)},
        {"include_unpooled", c.loss.include_unpooled}}},
      {"selection",
       {{"score_mode", selection::to_string(c.selection.score_mode)},
        {"double_softmax", c.selection.double_softmax},
        {"observe", selection::to_string(c.selection.observe)}}},
      {"encoder",
       {{"input_dim", c.encoder.input_dim},
        {"hidden_dim", c.encoder.hidden_dim},
        {"output_dim", c.encoder.output_dim},
        {"num_blocks", c.encoder.num_blocks},
        {"kernel_width", c.encoder.kernel_width},
        {"layer_norm", c.encoder.layer_norm},
        {"seed", c.encoder.seed}}},
  };
}

TrainConfig from_json(const json& j, TrainConfig base) {
  const std::map<std::string, Setter> loss{
      {"alpha", [](const json& v, TrainConfig& c) { c.loss.alpha = get_as<double>(v, "loss.alpha"); }},
      {"pool",
       [](const json& v, TrainConfig& c) {
         c.loss.pool_mode = numerics::parse_pool_mode(get_as<std::string>(v, "loss.pool"));
       }},
      {"include_unpooled",
       [](const json& v, TrainConfig& c) { c.loss.include_unpooled = get_as<bool>(v, "loss.include_unpooled"); }},
  };
  const std::map<std::string, Setter> sel{
      {"score_mode",
       [](const json& v, TrainConfig& c) {
         c.selection.score_mode = selection::parse_score_mode(get_as<std::string>(v, "selection.score_mode"));
       }},
      {"double_softmax",
       [](const json& v, TrainConfig& c) {
         c.selection.double_softmax = get_as<bool>(v, "selection.double_softmax");
       }},
      {"observe",
       [](const json& v, TrainConfig& c) {
         c.selection.observe = selection::parse_observe_mode(get_as<std::string>(v, "selection.observe"));
       }},
  };
  const std::map<std::string, Setter> enc{
      {"input_dim", [](const json& v, TrainConfig& c) { c.encoder.input_dim = get_count(v, "encoder.input_dim"); }},
      {"hidden_dim",
       [](const json& v, TrainConfig& c) { c.encoder.hidden_dim = get_count(v, "encoder.hidden_dim"); }},
      {"output_dim",
       [](const json& v, TrainConfig& c) { c.encoder.output_dim = get_count(v, "encoder.output_dim"); }},
      {"num_blocks",
       [](const json& v, TrainConfig& c) { c.encoder.num_blocks = get_count(v, "encoder.num_blocks"); }},
      {"kernel_width",
       [](const json& v, TrainConfig& c) { c.encoder.kernel_width = get_count(v, "encoder.kernel_width"); }},
      {"layer_norm", [](const json& v, TrainConfig& c) { c.encoder.layer_norm = get_as<bool>(v, "encoder.layer_norm"); }},
      {"seed", [](const json& v, TrainConfig& c) { c.encoder.seed = get_count(v, "encoder.seed"); }},
  };
  const std::map<std::string, Setter> top{
      {"mode", [](const json& v, TrainConfig& c) { c.mode = trainer::parse_mode(get_as<std::string>(v, "mode")); }},
      {"learning_rate",
       [](const json& v, TrainConfig& c) { c.learning_rate = get_as<double>(v, "learning_rate"); }},
      {"batch_size", [](const json& v, TrainConfig& c) { c.batch_size = get_count(v, "batch_size"); }},
      {"epochs", [](const json& v, TrainConfig& c) { c.epochs = get_count(v, "epochs"); }},
      {"mask_prob", [](const json& v, TrainConfig& c) { c.mask_prob = get_as<double>(v, "mask_prob"); }},
      {"min_overlap_pow",
       [](const json& v, TrainConfig& c) { c.min_overlap_pow = static_cast<int>(get_count(v, "min_overlap_pow")); }},
      {"normalize", [](const json& v, TrainConfig& c) { c.normalize = get_as<bool>(v, "normalize"); }},
      {"seed", [](const json& v, TrainConfig& c) { c.seed = get_count(v, "seed"); }},
      {"precision",
       [](const json& v, TrainConfig& c) {
         c.precision = trainer::parse_precision(get_as<std::string>(v, "precision"));
       }},
      {"threads", [](const json& v, TrainConfig& c) { c.threads = get_count(v, "threads"); }},
      {"loss", [&loss](const json& v, TrainConfig& c) { apply_section(v, c, loss, "loss."); }},
      {"selection", [&sel](const json& v, TrainConfig& c) { apply_section(v, c, sel, "selection."); }},
      {"encoder", [&enc](const json& v, TrainConfig& c) { apply_section(v, c, enc, "encoder."); }},
  };
  apply_section(j, base, top, "");
  return base;
}

TrainConfig load_file(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j, std::move(base));
}

}  // namespace tsiars::config
