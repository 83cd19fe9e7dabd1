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

#include <string>

#include "starmesh/geometry.hpp"

namespace starmesh {

// OBJ with the per-vertex color extension: "v x y z r g b" lines.
void export_obj(const std::string& path, const SurfaceMesh& mesh, const Tensor& colors);

struct ObjData {
  Tensor positions;  // [V,3]
  Tensor colors;     // [V,3]; zeros when the file has no colors
  std::vector<std::array<int, 3>> triangles;
};
ObjData import_obj(const std::string& path);

}  // namespace starmesh
