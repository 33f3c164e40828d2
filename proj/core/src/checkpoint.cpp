/* Copyright 2026 The ctxdet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "ctxdet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "ctxdet/config.hpp"
#include "ctxdet/image.hpp"

namespace ctxdet {
namespace {

constexpr char kMagic[8] = {'C', 'T', 'X', 'D', 'E', 'T', 'C', 'K'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ofstream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open checkpoint " + path.string());
  }

  template <typename T>
  T get() {
    T v{};
    read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
  }

  std::string get_string(std::size_t limit) {
    const auto n = get<std::uint32_t>();
    if (n > limit) fail("string length out of range");
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

  void read(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) fail("truncated file");
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

  [[noreturn]] void fail(const std::string& what) const {
    throw CheckpointError("checkpoint " + path_.string() + ": " + what);
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::uint64_t config_hash(const ModelConfig& config) { return fnv1a(model_config_text(config)); }

void save_checkpoint(const Detector& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kCheckpointFormatVersion);
    put<std::uint64_t>(out, config_hash(model.config()));
    put_string(out, model_config_text(model.config()));
    const auto& params = model.parameters().all();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const Parameter& p : params) {
      put_string(out, p.name);
      const Shape4& s = p.value.shape();
      for (int e : {s.n, s.c, s.h, s.w}) put<std::int32_t>(out, e);
      out.write(reinterpret_cast<const char*>(p.value.data()),
                static_cast<std::streamsize>(p.value.size() * sizeof(float)));
    }
    if (!out) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Detector load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
  Reader in(path);
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) in.fail("not a ctxdet checkpoint");
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointFormatVersion) {
    in.fail("unsupported format version " + std::to_string(version));
  }
  const auto stored_hash = in.get<std::uint64_t>();
  const std::string text = in.get_string(1 << 20);
  ModelConfig config;
  try {
    config = parse_model_config_text(text);
  } catch (const ConfigError& e) {
    in.fail(std::string("bad embedded model config: ") + e.what());
  }
  if (config_hash(config) != stored_hash) in.fail("model config hash mismatch");
  if (expected != nullptr && config_hash(*expected) != stored_hash) {
    in.fail("model config differs from the expected configuration");
  }
  Detector model(config, 0);
  auto& params = model.parameters().all();
  const auto count = in.get<std::uint32_t>();
  if (count != params.size()) {
    in.fail("parameter count " + std::to_string(count) + " != " + std::to_string(params.size()));
  }
  for (Parameter& p : params) {
    const std::string name = in.get_string(4096);
    if (name != p.name) in.fail("expected parameter '" + p.name + "', found '" + name + "'");
    Shape4 s;
    s.n = in.get<std::int32_t>();
    s.c = in.get<std::int32_t>();
    s.h = in.get<std::int32_t>();
    s.w = in.get<std::int32_t>();
    if (!(s == p.value.shape())) {
      in.fail("shape of '" + name + "' is " + s.to_string() + ", expected " +
              p.value.shape().to_string());
    }
    in.read(reinterpret_cast<char*>(p.value.data()), p.value.size() * sizeof(float));
  }
  if (!in.at_end()) in.fail("trailing bytes");
  return model;
}

}  // namespace ctxdet
