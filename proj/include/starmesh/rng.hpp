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
#include <cstdint>

#include "starmesh/tensor.hpp"

namespace starmesh {

// xoshiro256** with a splitmix64 seeding stage. std::mt19937 plus the
// standard distributions is not byte-stable across library versions; every
// deterministic-output guarantee in the project routes through this
// generator instead.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  double normal();                        // N(0, 1), Box-Muller
  int64_t uniform_int(int64_t n);         // [0, n)

  Tensor normal_tensor(Shape shape, double stddev = 1.0);
  Tensor uniform_tensor(Shape shape, double lo, double hi);

  // Independent deterministic substream, e.g. one per dataset scene.
  Rng fork(uint64_t stream) const;

  std::array<uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<uint64_t, 4>& s) { s_ = s; }

 private:
  Rng() = default;
  std::array<uint64_t, 4> s_{};
  uint64_t seed_ = 0;
};

}  // namespace starmesh
