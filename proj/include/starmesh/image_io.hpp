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
#include <vector>

#include "starmesh/tensor.hpp"

namespace starmesh {

// 8-bit RGB PNG (no alpha), deterministic encoder. Values are clamped to
// [0,1] and quantized with round(v * 255).
void png_write(const std::string& path, const Tensor& image_hwc);
Tensor png_read(const std::string& path);  // -> [H,W,3] with values k/255
std::vector<uint8_t> png_encode(const Tensor& image_hwc);

// NPY-format float grids for exact tests; float32 quantizes, float64 is
// bit-exact.
void npy_write_f32(const std::string& path, const Tensor& t);
void npy_write_f64(const std::string& path, const Tensor& t);
Tensor npy_read(const std::string& path);

// Montage of same-sized [H,W,3] tiles on a light gray canvas.
Tensor tile_images(const std::vector<Tensor>& tiles, int cols, int pad = 2);

}  // namespace starmesh
