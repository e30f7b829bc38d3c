// Copyright 2026 The crossctx Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Weight checkpoint container.
//
//   "CCCW"  u32 version
//   u32 n_meta   { str key, str value } * n_meta      (config fingerprint)
//   u32 n_tensor { str name, u32 rank, u32 dims[rank], f64 data[] } * n_tensor
//   u32 crc32 of every preceding byte
//
// All integers and floats little-endian; str is a u32 length plus bytes.

#ifndef CROSSCTX_CHECKPOINT_H_
#define CROSSCTX_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "crossctx/autodiff.h"

namespace crossctx {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
  const std::string& meta_value(const std::string& key) const;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies every parameter (in registration order) into a checkpoint.
Checkpoint capture_parameters(const ParameterSet& params,
                              std::map<std::string, std::string> meta);
// Restores every parameter by name; missing names or dims mismatches throw
// FormatError. Extra tensors whose names start with `ignore_prefix` are
// allowed, any other extra tensor is an error.
void restore_parameters(ParameterSet& params, const Checkpoint& ckpt,
                        const std::string& ignore_prefix = "adam.");

}  // namespace crossctx

#endif  // CROSSCTX_CHECKPOINT_H_
