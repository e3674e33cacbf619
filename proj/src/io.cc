// ldspeech/io.cc

// Copyright 2026  The ldspeech Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "ldspeech/io.h"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

namespace ldspeech {

namespace fs = std::filesystem;

namespace {

void Put32(std::vector<unsigned char> *out, uint32_t v) {
  out->push_back(static_cast<unsigned char>(v >> 24));
  out->push_back(static_cast<unsigned char>(v >> 16));
  out->push_back(static_cast<unsigned char>(v >> 8));
  out->push_back(static_cast<unsigned char>(v));
}

void AppendChunk(std::vector<unsigned char> *png, const char type[4],
                 const std::vector<unsigned char> &data) {
  Put32(png, static_cast<uint32_t>(data.size()));
  size_t crc_start = png->size();
  png->insert(png->end(), type, type + 4);
  png->insert(png->end(), data.begin(), data.end());
  uint32_t crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, png->data() + crc_start,
              static_cast<uInt>(png->size() - crc_start));
  Put32(png, crc);
}

}  // namespace

void WriteTensor(const std::string &path, const Tensor &t) {
  int32_t rows = t.Dims()[0];
  int32_t cols = static_cast<int32_t>(t.NumEl() / rows);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write file: " + path);
  f.write(reinterpret_cast<const char *>(&rows), 4);
  f.write(reinterpret_cast<const char *>(&cols), 4);
  f.write(reinterpret_cast<const char *>(t.Value().data()),
          static_cast<std::streamsize>(t.NumEl() * sizeof(double)));
  if (!f) throw ConfigError("short write: " + path);
}

Tensor ReadTensor(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw PrereqError("cannot read file: " + path);
  int32_t rows = 0, cols = 0;
  f.read(reinterpret_cast<char *>(&rows), 4);
  f.read(reinterpret_cast<char *>(&cols), 4);
  if (!f || rows < 1 || cols < 1)
    throw ConfigError("corrupt tensor header: " + path);
  std::vector<double> data(static_cast<size_t>(rows) * cols);
  f.read(reinterpret_cast<char *>(data.data()),
         static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!f) throw ConfigError("corrupt tensor payload: " + path);
  return Tensor::FromData({rows, cols}, std::move(data));
}

void WriteNpy(const std::string &path, const Tensor &t) {
  if (t.Rank() != 2) throw ConfigError("npy export expects a 2-D tensor");
  std::ostringstream dict;
  dict << "{'descr': '<f8', 'fortran_order': False, 'shape': (" << t.Rows()
       << ", " << t.Cols() << "), }";
  std::string header = dict.str();
  size_t base = 6 + 2 + 2;  // magic, version, header length field
  size_t total = base + header.size() + 1;
  size_t pad = (64 - total % 64) % 64;
  header.append(pad, ' ');
  header.push_back('\n');

  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write file: " + path);
  const unsigned char magic[8] = {0x93, 'N', 'U', 'M', 'P', 'Y', 1, 0};
  f.write(reinterpret_cast<const char *>(magic), 8);
  uint16_t hlen = static_cast<uint16_t>(header.size());
  f.write(reinterpret_cast<const char *>(&hlen), 2);
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  f.write(reinterpret_cast<const char *>(t.Value().data()),
          static_cast<std::streamsize>(t.NumEl() * sizeof(double)));
  if (!f) throw ConfigError("short write: " + path);
}

Tensor ReadNpy(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw PrereqError("cannot read file: " + path);
  unsigned char magic[8];
  f.read(reinterpret_cast<char *>(magic), 8);
  if (!f || magic[0] != 0x93 || std::memcmp(magic + 1, "NUMPY", 5) != 0)
    throw ConfigError("not an npy file: " + path);
  uint16_t hlen = 0;
  f.read(reinterpret_cast<char *>(&hlen), 2);
  std::string header(hlen, '\0');
  f.read(header.data(), hlen);
  if (!f) throw ConfigError("corrupt npy header: " + path);
  if (header.find("'<f8'") == std::string::npos ||
      header.find("False") == std::string::npos)
    throw ConfigError("unsupported npy dtype or order: " + path);
  size_t lp = header.find('(');
  size_t rp = header.find(')');
  if (lp == std::string::npos || rp == std::string::npos)
    throw ConfigError("corrupt npy shape: " + path);
  int rows = 0, cols = 0;
  if (std::sscanf(header.substr(lp, rp - lp + 1).c_str(), "(%d, %d)", &rows,
                  &cols) != 2 ||
      rows < 1 || cols < 1)
    throw ConfigError("corrupt npy shape: " + path);
  std::vector<double> data(static_cast<size_t>(rows) * cols);
  f.read(reinterpret_cast<char *>(data.data()),
         static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!f) throw ConfigError("corrupt npy payload: " + path);
  return Tensor::FromData({rows, cols}, std::move(data));
}

void WritePngHeatmap(const std::string &path, const Tensor &t) {
  if (t.Rank() != 2) throw ConfigError("heatmap expects a 2-D tensor");
  int width = t.Rows();   // time axis runs horizontally
  int height = t.Cols();
  double lo = t.Value()[0], hi = t.Value()[0];
  for (double v : t.Value()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double span = hi - lo;

  // Scanlines top-down: top row is the highest Mel bin.
  std::vector<unsigned char> raw;
  raw.reserve(static_cast<size_t>(height) * (width + 1));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);  // filter: none
    int bin = height - 1 - y;
    for (int x = 0; x < width; ++x) {
      double v = t.At(x, bin);
      double n = span > 0 ? (v - lo) / span : 0.0;
      raw.push_back(static_cast<unsigned char>(n * 255.0 + 0.5));
    }
  }
  uLongf comp_cap = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> comp(comp_cap);
  if (compress2(comp.data(), &comp_cap, raw.data(),
                static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw NumericalError("png compression failed");
  comp.resize(comp_cap);

  std::vector<unsigned char> png = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<unsigned char> ihdr;
  Put32(&ihdr, static_cast<uint32_t>(width));
  Put32(&ihdr, static_cast<uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter
  ihdr.push_back(0);  // interlace
  AppendChunk(&png, "IHDR", ihdr);
  AppendChunk(&png, "IDAT", comp);
  AppendChunk(&png, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write file: " + path);
  f.write(reinterpret_cast<const char *>(png.data()),
          static_cast<std::streamsize>(png.size()));
}

uint64_t Fnv1a(const void *data, size_t n, uint64_t seed) {
  const unsigned char *p = static_cast<const unsigned char *>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

uint64_t FingerprintTensor(const Tensor &t, uint64_t seed) {
  uint64_t h = seed;
  for (int d : t.Dims()) {
    int32_t d32 = d;
    h = Fnv1a(&d32, 4, h);
  }
  h = Fnv1a(t.Value().data(), t.Value().size() * sizeof(double), h);
  return h;
}

std::string HexHash(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

void SaveCheckpoint(const std::string &dir, const std::string &stage,
                    const nlohmann::json &config, const ParamMap &params,
                    const std::string &corpus_fingerprint) {
  EnsureDir(dir);
  EnsureDir(dir + "/weights");
  nlohmann::json meta;
  meta["stage"] = stage;
  meta["config"] = config;
  std::string cfg_str = config.dump();
  meta["config_hash"] = HexHash(Fnv1a(cfg_str.data(), cfg_str.size()));
  meta["corpus_fingerprint"] = corpus_fingerprint;
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto &[name, t] : params) {
    WriteTensor(dir + "/weights/" + name + ".bin", t);
    nlohmann::json entry;
    entry["name"] = name;
    entry["rows"] = t.Dims()[0];
    entry["cols"] = static_cast<int>(t.NumEl() / t.Dims()[0]);
    manifest.push_back(entry);
  }
  meta["params"] = manifest;
  WriteTextFile(dir + "/config.json", meta.dump(2));
}

nlohmann::json LoadCheckpointMeta(const std::string &dir) {
  std::string path = dir + "/config.json";
  if (!FileExists(path)) throw PrereqError("no checkpoint at: " + dir);
  return nlohmann::json::parse(ReadTextFile(path));
}

void LoadCheckpointParams(const std::string &dir, ParamMap *params) {
  nlohmann::json meta = LoadCheckpointMeta(dir);
  for (auto &[name, t] : *params) {
    std::string path = dir + "/weights/" + name + ".bin";
    if (!FileExists(path))
      throw ConfigError("checkpoint missing parameter: " + name);
    Tensor stored = ReadTensor(path);
    if (stored.Dims()[0] != t.Dims()[0] || stored.NumEl() != t.NumEl())
      throw ConfigError("checkpoint shape mismatch for parameter: " + name);
    t.MutableValue() = stored.Value();
  }
}

uint64_t HashParams(const ParamMap &params) {
  uint64_t h = 14695981039346656037ull;
  for (const auto &[name, t] : params) {
    h = Fnv1a(name.data(), name.size(), h);
    h = FingerprintTensor(t, h);
  }
  return h;
}

DirLock::DirLock(const std::string &dir) {
  EnsureDir(dir);
  path_ = dir + "/.lock";
  if (FileExists(path_))
    throw ConfigError("checkpoint directory is locked: " + dir);
  std::ofstream f(path_);
  f << "lock\n";
}

DirLock::~DirLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

bool FileExists(const std::string &path) {
  std::error_code ec;
  return fs::exists(path, ec);
}

void EnsureDir(const std::string &dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create directory: " + dir);
}

void WriteTextFile(const std::string &path, const std::string &text) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write file: " + path);
  f << text;
}

std::string ReadTextFile(const std::string &path) {
  std::ifstream f(path);
  if (!f) throw PrereqError("cannot read file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace ldspeech
