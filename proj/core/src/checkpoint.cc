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

#include "crossctx/checkpoint.h"

#include "crossctx/binary_io.h"

namespace crossctx {

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

const std::string& Checkpoint::meta_value(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw FormatError("checkpoint lacks metadata key '" + key + "'");
  return it->second;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.magic("CCCW");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.meta.size()));
  for (const auto& [k, v] : ckpt.meta) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.dims()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : t.values()) w.f64(v);
  }
  w.u32(crc32(w.bytes()));
  return std::move(w.bytes());
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw FormatError("checkpoint too short");
  const auto body = bytes.first(bytes.size() - 4);
  ByteReader tail(bytes.last(4));
  if (tail.u32() != crc32(body)) throw FormatError("checkpoint checksum mismatch");
  ByteReader r(body);
  r.expect_magic("CCCW");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    ckpt.meta[k] = r.str();
  }
  const std::uint32_t n_tensor = r.u32();
  for (std::uint32_t i = 0; i < n_tensor; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError("implausible tensor rank in checkpoint");
    std::vector<int> dims(rank);
    std::size_t count = 1;
    for (auto& d : dims) {
      d = static_cast<int>(r.u32());
      count *= static_cast<std::size_t>(d);
    }
    if (count * 8 > r.remaining()) throw FormatError("checkpoint tensor overruns file");
    std::vector<double> data(count);
    for (double& v : data) v = r.f64();
    ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(dims), std::move(data)));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes in checkpoint");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path));
}

Checkpoint capture_parameters(const ParameterSet& params,
                              std::map<std::string, std::string> meta) {
  Checkpoint ckpt;
  ckpt.meta = std::move(meta);
  for (const Parameter* p : params.all()) ckpt.tensors.emplace_back(p->name, p->value);
  return ckpt;
}

void restore_parameters(ParameterSet& params, const Checkpoint& ckpt,
                        const std::string& ignore_prefix) {
  std::size_t matched = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    Parameter* p = params.find(name);
    if (p == nullptr) {
      if (!ignore_prefix.empty() && name.compare(0, ignore_prefix.size(), ignore_prefix) == 0) {
        continue;
      }
      throw FormatError("checkpoint tensor '" + name + "' has no matching parameter");
    }
    if (!p->value.same_shape(t)) {
      throw FormatError("checkpoint tensor '" + name + "' has dims " + t.shape_string() +
                        ", model expects " + p->value.shape_string());
    }
    p->value = t;
    ++matched;
  }
  if (matched != params.all().size()) {
    throw FormatError("checkpoint is missing " +
                      std::to_string(params.all().size() - matched) + " parameter(s)");
  }
}

}  // namespace crossctx
