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

#include "starmesh/image_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace starmesh {

namespace {

void put_u32_be(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

uint32_t read_u32_be(const uint8_t* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void append_chunk(std::vector<uint8_t>& out, const char type[4],
                  const std::vector<uint8_t>& payload) {
  put_u32_be(out, static_cast<uint32_t>(payload.size()));
  const size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const uLong crc = crc32(0L, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
  put_u32_be(out, static_cast<uint32_t>(crc));
}

std::vector<uint8_t> zlib_deflate(const std::vector<uint8_t>& data) {
  uLongf bound = compressBound(static_cast<uLong>(data.size()));
  std::vector<uint8_t> out(bound);
  // Fixed level keeps the byte stream deterministic for a given zlib.
  if (compress2(out.data(), &bound, data.data(), static_cast<uLong>(data.size()), 6) != Z_OK) {
    throw std::runtime_error("png: deflate failed");
  }
  out.resize(bound);
  return out;
}

std::vector<uint8_t> zlib_inflate(const uint8_t* data, size_t len, size_t expected) {
  std::vector<uint8_t> out(expected);
  uLongf out_len = static_cast<uLongf>(expected);
  if (uncompress(out.data(), &out_len, data, static_cast<uLong>(len)) != Z_OK ||
      out_len != expected) {
    throw std::runtime_error("png: inflate failed");
  }
  return out;
}

void write_file(const std::string& path, const void* data, size_t len) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot open: " + path);
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<uint8_t> data(static_cast<size_t>(size));
  in.read(reinterpret_cast<char*>(data.data()), size);
  if (!in) throw std::runtime_error("read failed: " + path);
  return data;
}

}  // namespace

std::vector<uint8_t> png_encode(const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw std::invalid_argument("png_encode: expected [H,W,3]");
  }
  const int64_t h = image.dim(0), w = image.dim(1);
  // Filter type 0 on every row; simple and deterministic.
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(h * (1 + w * 3)));
  for (int64_t i = 0; i < h; ++i) {
    raw.push_back(0);
    for (int64_t j = 0; j < w; ++j) {
      for (int64_t c = 0; c < 3; ++c) {
        const double v = std::clamp(image.at(i, j, c), 0.0, 1.0);
        raw.push_back(static_cast<uint8_t>(std::lround(v * 255.0)));
      }
    }
  }
  std::vector<uint8_t> png = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  std::vector<uint8_t> ihdr;
  put_u32_be(ihdr, static_cast<uint32_t>(w));
  put_u32_be(ihdr, static_cast<uint32_t>(h));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // color type: truecolor
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // no interlace
  append_chunk(png, "IHDR", ihdr);
  append_chunk(png, "IDAT", zlib_deflate(raw));
  append_chunk(png, "IEND", {});
  return png;
}

void png_write(const std::string& path, const Tensor& image) {
  const std::vector<uint8_t> bytes = png_encode(image);
  write_file(path, bytes.data(), bytes.size());
}

Tensor png_read(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file(path);
  if (bytes.size() < 8 || bytes[1] != 'P' || bytes[2] != 'N' || bytes[3] != 'G') {
    throw std::runtime_error("png_read: not a PNG: " + path);
  }
  size_t pos = 8;
  int64_t w = 0, h = 0;
  int bit_depth = 0, color_type = 0, interlace = 0;
  std::vector<uint8_t> idat;
  while (pos + 8 <= bytes.size()) {
    const uint32_t len = read_u32_be(&bytes[pos]);
    const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
    const uint8_t* payload = &bytes[pos + 8];
    if (std::memcmp(type, "IHDR", 4) == 0) {
      w = read_u32_be(payload);
      h = read_u32_be(payload + 4);
      bit_depth = payload[8];
      color_type = payload[9];
      interlace = payload[12];
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), payload, payload + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (bit_depth != 8 || color_type != 2 || interlace != 0) {
    throw std::runtime_error("png_read: only 8-bit RGB non-interlaced supported: " + path);
  }
  const int64_t stride = w * 3;
  std::vector<uint8_t> raw = zlib_inflate(idat.data(), idat.size(),
                                          static_cast<size_t>(h * (stride + 1)));
  // Undo per-row filters (encoder emits 0, but accept the standard five).
  std::vector<uint8_t> pix(static_cast<size_t>(h * stride));
  for (int64_t i = 0; i < h; ++i) {
    const uint8_t filter = raw[static_cast<size_t>(i * (stride + 1))];
    const uint8_t* src = &raw[static_cast<size_t>(i * (stride + 1) + 1)];
    uint8_t* dst = &pix[static_cast<size_t>(i * stride)];
    const uint8_t* prev = i > 0 ? &pix[static_cast<size_t>((i - 1) * stride)] : nullptr;
    for (int64_t k = 0; k < stride; ++k) {
      const int a = k >= 3 ? dst[k - 3] : 0;
      const int b = prev ? prev[k] : 0;
      const int c = (prev && k >= 3) ? prev[k - 3] : 0;
      int x = src[k];
      switch (filter) {
        case 0: break;
        case 1: x += a; break;
        case 2: x += b; break;
        case 3: x += (a + b) / 2; break;
        case 4: {
          const int p = a + b - c;
          const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
          x += (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
          break;
        }
        default: throw std::runtime_error("png_read: bad filter");
      }
      dst[k] = static_cast<uint8_t>(x & 0xFF);
    }
  }
  Tensor image(Shape{h, w, 3});
  for (int64_t i = 0; i < h * stride; ++i) image[i] = pix[static_cast<size_t>(i)] / 255.0;
  return image;
}

namespace {

void npy_write(const std::string& path, const Tensor& t, bool f32) {
  std::ostringstream shape;
  shape << "(";
  for (size_t i = 0; i < t.shape().size(); ++i) shape << t.shape()[i] << ", ";
  shape << ")";
  std::string header = std::string("{'descr': '") + (f32 ? "<f4" : "<f8") +
                       "', 'fortran_order': False, 'shape': " + shape.str() + ", }";
  const size_t base = 10 + header.size() + 1;
  header.append((64 - base % 64) % 64, ' ');
  header.push_back('\n');

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("npy_write: cannot open " + path);
  const uint8_t magic[8] = {0x93, 'N', 'U', 'M', 'P', 'Y', 1, 0};
  out.write(reinterpret_cast<const char*>(magic), 8);
  const uint16_t hlen = static_cast<uint16_t>(header.size());
  out.write(reinterpret_cast<const char*>(&hlen), 2);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  if (f32) {
    std::vector<float> buf(static_cast<size_t>(t.size()));
    for (int64_t i = 0; i < t.size(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(t[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  } else {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("npy_write: write failed " + path);
}

}  // namespace

void npy_write_f32(const std::string& path, const Tensor& t) { npy_write(path, t, true); }
void npy_write_f64(const std::string& path, const Tensor& t) { npy_write(path, t, false); }

Tensor npy_read(const std::string& path) {
  std::vector<uint8_t> bytes = read_file(path);
  if (bytes.size() < 10 || bytes[0] != 0x93 || std::memcmp(&bytes[1], "NUMPY", 5) != 0) {
    throw std::runtime_error("npy_read: not an NPY file: " + path);
  }
  const uint16_t hlen = static_cast<uint16_t>(bytes[8] | (bytes[9] << 8));
  const std::string header(reinterpret_cast<const char*>(&bytes[10]), hlen);
  const bool f32 = header.find("<f4") != std::string::npos;
  const bool f64 = header.find("<f8") != std::string::npos;
  if (!f32 && !f64) throw std::runtime_error("npy_read: unsupported dtype in " + path);
  if (header.find("'fortran_order': False") == std::string::npos) {
    throw std::runtime_error("npy_read: only C order supported");
  }
  const size_t lp = header.find('(');
  const size_t rp = header.find(')');
  Shape shape;
  std::string dims = header.substr(lp + 1, rp - lp - 1);
  std::istringstream ds(dims);
  std::string item;
  while (std::getline(ds, item, ',')) {
    if (item.find_first_of("0123456789") == std::string::npos) continue;
    shape.push_back(std::stoll(item));
  }
  if (shape.empty()) shape.push_back(1);
  Tensor t(shape);
  const uint8_t* payload = bytes.data() + 10 + hlen;
  if (f32) {
    const float* p = reinterpret_cast<const float*>(payload);
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(p[i]);
  } else {
    std::memcpy(t.data(), payload, static_cast<size_t>(t.size()) * sizeof(double));
  }
  return t;
}

Tensor tile_images(const std::vector<Tensor>& tiles, int cols, int pad) {
  if (tiles.empty()) throw std::invalid_argument("tile_images: no tiles");
  const int64_t th = tiles[0].dim(0), tw = tiles[0].dim(1);
  const int rows = static_cast<int>((tiles.size() + cols - 1) / cols);
  Tensor canvas(Shape{rows * (th + pad) + pad, cols * (tw + pad) + pad, 3}, 0.85);
  for (size_t k = 0; k < tiles.size(); ++k) {
    const int r = static_cast<int>(k) / cols;
    const int c = static_cast<int>(k) % cols;
    const int64_t oy = r * (th + pad) + pad;
    const int64_t ox = c * (tw + pad) + pad;
    for (int64_t i = 0; i < th; ++i) {
      for (int64_t j = 0; j < tw; ++j) {
        for (int64_t ch = 0; ch < 3; ++ch) {
          canvas.at(oy + i, ox + j, ch) = tiles[k].at(i, j, ch);
        }
      }
    }
  }
  return canvas;
}

}  // namespace starmesh
