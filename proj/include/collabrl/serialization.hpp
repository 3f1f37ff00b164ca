#pragma once

#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "collabrl/domain.hpp"
#include "collabrl/policy.hpp"

namespace collabrl {

using ordered_json = nlohmann::ordered_json;

// Dataset files are line-delimited JSON, one prompt per line, fields in a
// fixed order. nlohmann serializes doubles with shortest round-trip
// precision, so read(write(x)) == x exactly.

inline ordered_json prompt_to_json(const Prompt& p) {
  ordered_json j;
  j["id"] = p.id;
  j["features"] = p.features;
  j["difficulty"] = p.difficulty;
  ordered_json actions = ordered_json::array();
  for (const ActionSpec& a : p.action_table) {
    ordered_json ja;
    ja["kind"] = a.kind == ActionKind::CallHelp ? "call_help" : "device";
    ja["is_correct"] = a.is_correct;
    ja["format_ok"] = a.format_ok;
    actions.push_back(ja);
  }
  j["action_table"] = actions;
  j["cloud_correct"] = p.cloud_correct;
  return j;
}

inline Prompt prompt_from_json(const ordered_json& j) {
  Prompt p;
  p.id = j.at("id").get<int>();
  p.features = j.at("features").get<std::vector<double>>();
  p.difficulty = j.at("difficulty").get<int>();
  for (const auto& ja : j.at("action_table")) {
    ActionSpec a;
    const std::string kind = ja.at("kind").get<std::string>();
    if (kind == "call_help")
      a.kind = ActionKind::CallHelp;
    else if (kind == "device")
      a.kind = ActionKind::DeviceAnswer;
    else
      throw std::runtime_error("unknown action kind: " + kind);
    a.is_correct = ja.at("is_correct").get<bool>();
    a.format_ok = ja.at("format_ok").get<bool>();
    p.action_table.push_back(a);
  }
  p.cloud_correct = j.at("cloud_correct").get<bool>();
  return p;
}

inline void write_dataset(const std::string& path, std::span<const Prompt> prompts) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const Prompt& p : prompts) out << prompt_to_json(p).dump() << '\n';
}

inline std::vector<Prompt> read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  std::vector<Prompt> prompts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      prompts.push_back(prompt_from_json(ordered_json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return prompts;
}

// Checkpoints: variant tag + shape header + flat parameter array.

inline void save_checkpoint(const std::string& path, const PolicyParams& params) {
  ordered_json j;
  j["variant"] = params.variant == PolicyVariant::Tabular ? "tabular" : "linear_softmax";
  if (params.variant == PolicyVariant::Tabular)
    j["row_offsets"] = params.row_offsets;
  else {
    j["max_actions"] = params.max_actions;
    j["feature_dim"] = params.feature_dim;
  }
  j["values"] = params.values;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << j.dump() << '\n';
}

inline PolicyParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  ordered_json j;
  in >> j;
  PolicyParams p;
  const std::string variant = j.at("variant").get<std::string>();
  if (variant == "tabular") {
    p.variant = PolicyVariant::Tabular;
    p.row_offsets = j.at("row_offsets").get<std::vector<std::int32_t>>();
  } else if (variant == "linear_softmax") {
    p.variant = PolicyVariant::LinearSoftmax;
    p.max_actions = j.at("max_actions").get<int>();
    p.feature_dim = j.at("feature_dim").get<int>();
  } else {
    throw std::runtime_error("unknown policy variant: " + variant);
  }
  p.values = j.at("values").get<std::vector<double>>();
  const std::size_t expect =
      p.variant == PolicyVariant::Tabular
          ? (p.row_offsets.empty() ? 0 : static_cast<std::size_t>(p.row_offsets.back()))
          : static_cast<std::size_t>(p.max_actions) * p.feature_dim + 2;
  if (p.values.size() != expect)
    throw std::runtime_error("checkpoint shape header does not match value count");
  return p;
}

}  // namespace collabrl
