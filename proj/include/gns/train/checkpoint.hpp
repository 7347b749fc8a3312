#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "gns/core/optim.hpp"
#include "gns/data/stats.hpp"
#include "gns/data/trajectory.hpp"
#include "gns/net/gns.hpp"

namespace gns::train {

inline constexpr char kCheckpointMagic[8] = {'G', 'N', 'S', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Snapshot of a training run: weights, optimizer moments and the
/// normalization statistics the weights were trained against.
struct Checkpoint {
  std::uint64_t step = 0;
  net::GnsConfig model;
  std::vector<NamedTensor> tensors;
  AdamState adam;
  data::NormStats stats;
  double train_loss = std::nan("");
};

inline Checkpoint make_checkpoint(std::uint64_t step, const net::GnsParams& params, const AdamState& adam,
                                  const data::NormStats& stats, double loss) {
  Checkpoint c;
  c.step = step;
  c.model = params.config;
  for (const auto& p : params.named()) c.tensors.push_back({p.name, p.var.value()});
  c.adam = adam;
  c.stats = stats;
  c.train_loss = loss;
  return c;
}

/// Layout (little endian): magic[8], u32 version, u32 header length, JSON
/// header, then every tensor's f64 values in header order, then the Adam
/// first and second moments.
inline std::string encode_checkpoint(const Checkpoint& c) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : c.tensors) tensors.push_back({{"name", t.name}, {"shape", t.value.shape()}});
  nlohmann::json header = {{"step", c.step},
                           {"model", c.model},
                           {"tensors", tensors},
                           {"adam",
                            {{"step_count", c.adam.step_count},
                             {"beta1", c.adam.config.beta1},
                             {"beta2", c.adam.config.beta2},
                             {"epsilon", c.adam.config.epsilon},
                             {"size", c.adam.first_moment.size()}}},
                           {"stats", data::to_json_value(c.stats)}};
  if (std::isfinite(c.train_loss)) header["train_loss"] = c.train_loss;
  const std::string h = header.dump();
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  data::detail::put_u32(out, kCheckpointVersion);
  data::detail::put_u32(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  for (const auto& t : c.tensors)
    for (double v : t.value.values()) data::detail::put_f64(out, v);
  for (double v : c.adam.first_moment) data::detail::put_f64(out, v);
  for (double v : c.adam.second_moment) data::detail::put_f64(out, v);
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes, const std::string& what = "checkpoint") {
  data::detail::Reader r{bytes, 0, what};
  if (r.bytes(sizeof(kCheckpointMagic)) != std::string(kCheckpointMagic, sizeof(kCheckpointMagic))) {
    throw DataError(what + ": not a checkpoint file");
  }
  if (const auto v = r.u32(); v != kCheckpointVersion) throw DataError(what + ": unsupported version " + std::to_string(v));
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(r.bytes(r.u32()));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(what + ": bad header: " + e.what());
  }
  Checkpoint c;
  c.step = h.at("step").get<std::uint64_t>();
  c.model = h.at("model").get<net::GnsConfig>();
  for (const auto& t : h.at("tensors")) {
    Tensor value(t.at("shape").get<Shape>());
    c.tensors.push_back({t.at("name").get<std::string>(), std::move(value)});
  }
  for (auto& t : c.tensors)
    for (auto& v : t.value.values()) v = r.f64();
  const auto& a = h.at("adam");
  AdamConfig ac{a.at("beta1").get<double>(), a.at("beta2").get<double>(), a.at("epsilon").get<double>()};
  c.adam = AdamState::zeros(a.at("size").get<std::size_t>(), ac);
  c.adam.step_count = a.at("step_count").get<std::uint64_t>();
  for (auto& v : c.adam.first_moment) v = r.f64();
  for (auto& v : c.adam.second_moment) v = r.f64();
  if (r.pos != bytes.size()) throw DataError(what + ": trailing bytes");
  c.stats = data::norm_stats_from_json(h.at("stats"));
  if (h.contains("train_loss")) c.train_loss = h.at("train_loss").get<double>();
  return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  data::detail::write_file(path, encode_checkpoint(c));
}
inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(data::detail::read_file(path), path.string());
}

/// Copies checkpoint weights into freshly built parameters for `target`.
/// Any missing, extra or reshaped tensor is reported by name.
inline net::GnsParams init_from_pretrained(const Checkpoint& c, const net::GnsConfig& target) {
  net::GnsParams params = net::make_gns_params(target, 0);
  const auto named = params.named();
  std::vector<std::string> problems;
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : c.tensors) by_name[t.name] = &t;
  for (const auto& p : named) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) {
      problems.push_back(p.name + " (missing from checkpoint)");
    } else if (it->second->value.shape() != p.var.shape()) {
      problems.push_back(p.name + " (checkpoint " + shape_string(it->second->value.shape()) + ", model " +
                         shape_string(p.var.shape()) + ")");
    }
    if (it != by_name.end()) by_name.erase(it);
  }
  for (const auto& [name, _] : by_name) problems.push_back(name + " (not in model)");
  if (!problems.empty()) {
    std::string msg = "checkpoint does not match the model architecture:";
    for (const auto& s : problems) msg += "\n  " + s;
    throw ConfigError(msg);
  }
  std::map<std::string, const NamedTensor*> lookup;
  for (const auto& t : c.tensors) lookup[t.name] = &t;
  for (const auto& p : named) {
    Var handle = p.var;
    handle.mutable_value() = lookup.at(p.name)->value;
  }
  return params;
}

inline net::GnsParams params_from_checkpoint(const Checkpoint& c) { return init_from_pretrained(c, c.model); }

}  // namespace gns::train
