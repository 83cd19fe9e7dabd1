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

#include "starmesh/obj_io.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace starmesh {

void export_obj(const std::string& path, const SurfaceMesh& mesh, const Tensor& colors) {
  const int v = mesh.vertex_count();
  if (colors.shape() != Shape{v, 3}) {
    throw std::invalid_argument("export_obj: colors must be [V,3]");
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("export_obj: cannot open " + path);
  char line[256];
  for (int i = 0; i < v; ++i) {
    // %.17g round-trips doubles, keeping import/export lossless.
    std::snprintf(line, sizeof(line), "v %.17g %.17g %.17g %.17g %.17g %.17g\n",
                  mesh.positions[3 * i], mesh.positions[3 * i + 1], mesh.positions[3 * i + 2],
                  colors[3 * i], colors[3 * i + 1], colors[3 * i + 2]);
    out << line;
  }
  for (const auto& tri : mesh.topology->triangles) {
    out << "f " << tri[0] + 1 << " " << tri[1] + 1 << " " << tri[2] + 1 << "\n";
  }
  if (!out) throw std::runtime_error("export_obj: write failed " + path);
}

ObjData import_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("import_obj: cannot open " + path);
  std::vector<double> pos, col;
  std::vector<std::array<int, 3>> tris;
  std::string line;
  bool any_colors = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) throw std::runtime_error("import_obj: bad vertex line");
      double r = 0, g = 0, b = 0;
      if (ls >> r >> g >> b) any_colors = true;
      pos.insert(pos.end(), {x, y, z});
      col.insert(col.end(), {r, g, b});
    } else if (tag == "f") {
      std::array<int, 3> t{};
      for (int k = 0; k < 3; ++k) {
        std::string corner;
        if (!(ls >> corner)) throw std::runtime_error("import_obj: bad face line");
        t[static_cast<size_t>(k)] = std::stoi(corner.substr(0, corner.find('/'))) - 1;
      }
      tris.push_back(t);
    }
  }
  ObjData data;
  const int64_t v = static_cast<int64_t>(pos.size()) / 3;
  data.positions = Tensor(Shape{v, 3}, std::move(pos));
  data.colors = any_colors ? Tensor(Shape{v, 3}, std::move(col)) : Tensor(Shape{v, 3});
  data.triangles = std::move(tris);
  return data;
}

}  // namespace starmesh
