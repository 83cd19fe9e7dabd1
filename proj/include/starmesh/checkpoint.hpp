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

#pragma once

#include <array>
#include <map>
#include <string>

#include "starmesh/nn.hpp"
#include "starmesh/tensor.hpp"

namespace starmesh {

// Single-file checkpoint: magic, JSON manifest (names, shapes, offsets,
// metadata, RNG state), then raw little-endian float64 payload.
struct CheckpointData {
  int64_t step = 0;
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> meta;
  std::array<uint64_t, 4> rng_state{};
  bool has_rng_state = false;
};

void save_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::string& path);

// Copies matching tensors into the parameter leaves, validating shapes.
// Throws if a parameter is missing from the checkpoint or has a different
// shape.
void restore_params(const CheckpointData& data, const std::vector<NamedParam>& params);
void store_params(CheckpointData& data, const std::vector<NamedParam>& params);

// Adam state round-trips under "opt/<name>/m|v" plus meta "opt.t".
void store_optimizer(CheckpointData& data, const Adam& opt, const std::string& tag);
void restore_optimizer(const CheckpointData& data, Adam& opt, const std::string& tag);

// Order-independent content checksum of a parameter set (frozen-weights
// checks in the training tests).
std::string params_checksum(const std::vector<NamedParam>& params);

}  // namespace starmesh
