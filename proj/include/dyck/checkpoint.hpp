#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dyck/model.hpp"
#include "dyck/optim.hpp"
#include "dyck/util.hpp"

namespace dyck {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian float32");

struct TrainState {
  int next_epoch = 0;
  int64_t global_step = 0;
  double best_valid_acc = -1.0;
  double best_valid_loss = std::numeric_limits<double>::infinity();
  std::vector<std::pair<int64_t, double>> history;  // (step, valid seq accuracy)

  nlohmann::json to_json() const {
    nlohmann::json h = nlohmann::json::array();
    for (const auto& [s, a] : history) h.push_back({s, a});
    // JSON has no infinity; the not-yet-evaluated loss round-trips as null
    nlohmann::json loss;
    if (std::isfinite(best_valid_loss)) loss = best_valid_loss;
    return {{"next_epoch", next_epoch},
            {"global_step", global_step},
            {"best_valid_acc", best_valid_acc},
            {"best_valid_loss", loss},
            {"history", h}};
  }
  static TrainState from_json(const nlohmann::json& js) {
    TrainState t;
    t.next_epoch = js.at("next_epoch").get<int>();
    t.global_step = js.at("global_step").get<int64_t>();
    t.best_valid_acc = js.at("best_valid_acc").get<double>();
    const auto& loss = js.at("best_valid_loss");
    t.best_valid_loss =
        loss.is_null() ? std::numeric_limits<double>::infinity() : loss.get<double>();
    for (const auto& row : js.at("history"))
      t.history.emplace_back(row.at(0).get<int64_t>(), row.at(1).get<double>());
    return t;
  }
};

// Single-file binary checkpoint: magic, version, JSON header, then a raw
// little-endian float32 payload addressed by the header's tensor index.
struct ModelCheckpoint {
  nlohmann::json run_config;  // opaque echo of the training run config
  ModelConfig model;
  ParamSet params;
  AdamState opt;
  TrainState train;
};

namespace detail {
constexpr char kCkptMagic[9] = {'D', 'Y', 'C', 'K', 'C', 'K', 'P', 'T', '\0'};
constexpr uint32_t kCkptVersion = 1;

inline void append_tensor_entry(nlohmann::json& index, std::string name, const Tensor& t,
                                std::string& payload) {
  nlohmann::json e;
  e["name"] = std::move(name);
  e["offset"] = payload.size();
  e["shape"] = t.shape;
  index.push_back(std::move(e));
  const size_t bytes = t.data.size() * sizeof(float);
  const size_t at = payload.size();
  payload.resize(at + bytes);
  std::memcpy(payload.data() + at, t.data.data(), bytes);
}
}  // namespace detail

inline void save_checkpoint(const std::string& path, const ModelCheckpoint& ck) {
  nlohmann::json index = nlohmann::json::array();
  std::string payload;
  for (size_t i = 0; i < ck.params.size(); ++i)
    detail::append_tensor_entry(index, "param:" + ck.params.names[i], ck.params.tensors[i],
                                payload);
  for (size_t i = 0; i < ck.opt.m.size(); ++i)
    detail::append_tensor_entry(index, "adam_m:" + ck.params.names[i], ck.opt.m[i], payload);
  for (size_t i = 0; i < ck.opt.v.size(); ++i)
    detail::append_tensor_entry(index, "adam_v:" + ck.params.names[i], ck.opt.v[i], payload);

  nlohmann::json header;
  header["model"] = ck.model.to_json();
  header["run"] = ck.run_config;
  header["adam_step"] = ck.opt.step;
  header["train"] = ck.train.to_json();
  header["tensors"] = std::move(index);
  header["payload_sha256"] = sha256_hex(payload);
  const std::string head = header.dump();

  std::string blob;
  blob.reserve(sizeof(detail::kCkptMagic) + 12 + head.size() + payload.size());
  blob.append(detail::kCkptMagic, sizeof(detail::kCkptMagic));
  const uint32_t ver = detail::kCkptVersion;
  blob.append(reinterpret_cast<const char*>(&ver), sizeof(ver));
  const uint64_t hlen = head.size();
  blob.append(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  blob += head;
  blob += payload;
  write_file(path, blob);
}

inline ModelCheckpoint load_checkpoint(const std::string& path) {
  const std::string blob = read_file(path);
  const size_t prefix = sizeof(detail::kCkptMagic) + sizeof(uint32_t) + sizeof(uint64_t);
  if (blob.size() < prefix) throw CorruptPayload(path + ": file shorter than header prefix");
  if (std::memcmp(blob.data(), detail::kCkptMagic, sizeof(detail::kCkptMagic)) != 0)
    throw CorruptPayload(path + ": bad magic");
  uint32_t ver;
  std::memcpy(&ver, blob.data() + sizeof(detail::kCkptMagic), sizeof(ver));
  if (ver != detail::kCkptVersion)
    throw VersionMismatch(path + ": version " + std::to_string(ver));
  uint64_t hlen;
  std::memcpy(&hlen, blob.data() + sizeof(detail::kCkptMagic) + sizeof(uint32_t), sizeof(hlen));
  if (blob.size() < prefix + hlen) throw CorruptPayload(path + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(prefix, hlen));
  } catch (const nlohmann::json::parse_error& e) {
    throw CorruptPayload(path + ": header parse: " + e.what());
  }
  const std::string payload = blob.substr(prefix + hlen);
  if (header.at("payload_sha256").get<std::string>() != sha256_hex(payload))
    throw CorruptPayload(path + ": payload digest mismatch");

  ModelCheckpoint ck;
  try {
    // bounds and overlap validation over the tensor index
    std::vector<std::pair<uint64_t, uint64_t>> extents;
    for (const auto& e : header.at("tensors")) {
      const uint64_t off = e.at("offset").get<uint64_t>();
      const std::vector<int> shape = e.at("shape").get<std::vector<int>>();
      const uint64_t bytes = static_cast<uint64_t>(Tensor::numel_of(shape)) * sizeof(float);
      if (off + bytes > payload.size())
        throw CorruptPayload(path + ": tensor " + e.at("name").get<std::string>() +
                             " exceeds payload");
      extents.emplace_back(off, off + bytes);
    }
    std::sort(extents.begin(), extents.end());
    for (size_t i = 1; i < extents.size(); ++i)
      if (extents[i].first < extents[i - 1].second)
        throw CorruptPayload(path + ": tensor extents overlap");

    ck.model = ModelConfig::from_json(header.at("model"));
    ck.run_config = header.at("run");
    ck.train = TrainState::from_json(header.at("train"));
    ck.opt.step = header.at("adam_step").get<int64_t>();

    auto read_tensor = [&](const nlohmann::json& e) {
      const uint64_t off = e.at("offset").get<uint64_t>();
      Tensor t(e.at("shape").get<std::vector<int>>());
      std::memcpy(t.data.data(), payload.data() + off, t.data.size() * sizeof(float));
      return t;
    };
    for (const auto& e : header.at("tensors")) {
      const std::string name = e.at("name").get<std::string>();
      if (name.rfind("param:", 0) == 0) ck.params.add(name.substr(6), read_tensor(e));
    }
    ck.opt.m.resize(ck.params.size());
    ck.opt.v.resize(ck.params.size());
    for (const auto& e : header.at("tensors")) {
      const std::string name = e.at("name").get<std::string>();
      if (name.rfind("adam_m:", 0) == 0)
        ck.opt.m[static_cast<size_t>(ck.params.index.at(name.substr(7)))] = read_tensor(e);
      else if (name.rfind("adam_v:", 0) == 0)
        ck.opt.v[static_cast<size_t>(ck.params.index.at(name.substr(7)))] = read_tensor(e);
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptPayload(path + ": header field: " + e.what());
  }
  return ck;
}

}  // namespace dyck
