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

#ifndef CTXDET_CHECKPOINT_HPP_
#define CTXDET_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <stdexcept>

#include "ctxdet/detector.hpp"

namespace ctxdet {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// FNV-1a over the canonical model config text.
std::uint64_t config_hash(const ModelConfig& config);

/// Binary layout: magic, format version, config hash, model config text,
/// then every parameter (name, shape, little-endian float32 values).
void save_checkpoint(const Detector& model, const std::filesystem::path& path);

/// Rebuilds the model from the embedded config. When `expected` is given,
/// its hash must match the stored one.
Detector load_checkpoint(const std::filesystem::path& path,
                         const ModelConfig* expected = nullptr);

}  // namespace ctxdet

#endif  // CTXDET_CHECKPOINT_HPP_
