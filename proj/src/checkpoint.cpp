// Copyright 2026 The Starmesh Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "starmesh/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "starmesh/sha256.hpp"

namespace starmesh {

namespace {

constexpr char kMagic[8] = {'S', 'M', 'C', 'K', 'P', 'T', '0', '1'};

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointData& data) {
  nlohmann::json manifest;
  manifest["version"] = 1;
  manifest["step"] = data.step;
  nlohmann::json tensors = nlohmann::json::object();
  int64_t offset = 0;
  for (const auto& [name, t] : data.tensors) {
    tensors[name] = {{"shape", t.shape()}, {"offset", offset}};
    offset += t.size();
  }
  manifest["tensors"] = std::move(tensors);
  manifest["meta"] = data.meta;
  if (data.has_rng_state) {
    std::vector<std::string> words;
    for (uint64_t w : data.rng_state) words.push_back(std::to_string(w));
    manifest["rng_state"] = words;
  }
  const std::string mjson = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(kMagic, sizeof(kMagic));
  const uint64_t mlen = mjson.size();
  out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
  out.write(mjson.data(), static_cast<std::streamsize>(mjson.size()));
  for (const auto& [name, t] : data.tensors) {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  }
  uint64_t mlen = 0;
  in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
  std::string mjson(mlen, '\0');
  in.read(mjson.data(), static_cast<std::streamsize>(mlen));
  if (!in) throw std::runtime_error("load_checkpoint: truncated manifest in " + path);
  nlohmann::json manifest = nlohmann::json::parse(mjson);

  CheckpointData data;
  data.step = manifest.value("step", int64_t{0});
  if (manifest.contains("meta")) {
    for (auto& [k, v] : manifest["meta"].items()) data.meta[k] = v.get<std::string>();
  }
  if (manifest.contains("rng_state")) {
    auto words = manifest["rng_state"].get<std::vector<std::string>>();
    if (words.size() != 4) throw std::runtime_error("load_checkpoint: bad rng state");
    for (size_t i = 0; i < 4; ++i) data.rng_state[i] = std::stoull(words[i]);
    data.has_rng_state = true;
  }
  // Offsets are relative to the payload start, in float64 units.
  const std::streampos payload_start = in.tellg();
  for (auto& [name, info] : manifest["tensors"].items()) {
    const Shape shape = info["shape"].get<Shape>();
    const int64_t offset = info["offset"].get<int64_t>();
    Tensor t(shape);
    in.seekg(payload_start + static_cast<std::streamoff>(offset * sizeof(double)));
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw std::runtime_error("load_checkpoint: truncated payload in " + path);
    data.tensors.emplace(name, std::move(t));
  }
  return data;
}

void restore_params(const CheckpointData& data, const std::vector<NamedParam>& params) {
  for (const auto& p : params) {
    auto it = data.tensors.find(p.name);
    if (it == data.tensors.end()) {
      throw std::runtime_error("restore_params: missing tensor " + p.name);
    }
    if (it->second.shape() != p.var.shape()) {
      throw std::runtime_error("restore_params: shape mismatch for " + p.name + ": checkpoint " +
                               shape_to_string(it->second.shape()) + " vs model " +
                               shape_to_string(p.var.shape()));
    }
    p.var.node()->mutable_value() = it->second;
  }
}

void store_params(CheckpointData& data, const std::vector<NamedParam>& params) {
  for (const auto& p : params) data.tensors[p.name] = p.var.value();
}

void store_optimizer(CheckpointData& data, const Adam& opt, const std::string& tag) {
  for (const auto& slot : opt.slots()) {
    data.tensors["opt/" + tag + "/" + slot.name + "/m"] = slot.m;
    data.tensors["opt/" + tag + "/" + slot.name + "/v"] = slot.v;
  }
  data.meta["opt." + tag + ".t"] = std::to_string(opt.t);
}

void restore_optimizer(const CheckpointData& data, Adam& opt, const std::string& tag) {
  for (auto& slot : opt.slots()) {
    const std::string base = "opt/" + tag + "/" + slot.name + "/";
    auto mi = data.tensors.find(base + "m");
    auto vi = data.tensors.find(base + "v");
    if (mi == data.tensors.end() || vi == data.tensors.end()) {
      throw std::runtime_error("restore_optimizer: missing state for " + slot.name);
    }
    slot.m = mi->second;
    slot.v = vi->second;
  }
  auto it = data.meta.find("opt." + tag + ".t");
  if (it != data.meta.end()) opt.t = std::stoll(it->second);
}

std::string params_checksum(const std::vector<NamedParam>& params) {
  Sha256 h;
  for (const auto& p : params) {
    h.update(p.name);
    h.update(p.var.value().data(), static_cast<size_t>(p.var.value().size()) * sizeof(double));
  }
  return h.hex_digest();
}

}  // namespace starmesh
