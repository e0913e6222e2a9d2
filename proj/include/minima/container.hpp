// Copyright 2026 The Minima Authors
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

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "minima/model.hpp"
#include "minima/tensor.hpp"

namespace minima {

// MNMA container, little-endian throughout:
//
//   header   "MNMA" | u32 version (1) | u64 entry count
//            | u64 metadata offset | u64 metadata length
//   index    per entry: u16 name length | name (UTF-8) | u8 dtype (0 f32, 1 f64)
//            | u8 ndim | u64 dims[ndim] | u64 payload offset
//   payload  row-major scalars, each block starting on a 64-byte boundary
//   metadata JSON text (optional; length 0 when absent), 64-byte aligned
inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::size_t kPayloadAlignment = 64;

struct StoredTensor {
  std::string name;
  DType dtype = DType::F64;
  Tensor tensor;
};

struct TensorFile {
  std::vector<StoredTensor> entries;
  nlohmann::json metadata;  // null when absent
};

std::vector<std::uint8_t> encode_tensor_file(const TensorFile& file);
// Throws FormatError, TruncationError or DuplicateEntryError.
TensorFile decode_tensor_file(std::span<const std::uint8_t> bytes);

void write_tensor_file(const TensorFile& file, const std::filesystem::path& path);
TensorFile read_tensor_file(const std::filesystem::path& path);

// Model containers keep layer_index and submodule_kind per entry under
// metadata["entries"], and total_layers / provenance at the top level.
TensorFile model_to_file(const ModelContainer& model);
ModelContainer model_from_file(const TensorFile& file);

void write_container(const ModelContainer& model, const std::filesystem::path& path);
ModelContainer read_container(const std::filesystem::path& path);

}  // namespace minima
