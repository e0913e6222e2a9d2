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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "minima/tensor.hpp"

namespace minima {

enum class SubmoduleKind { AttentionProj, Ffn, Embedding, Other };

std::string_view submodule_name(SubmoduleKind k);
SubmoduleKind parse_submodule(std::string_view name);

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

struct ModelEntry {
  std::string name;
  Tensor matrix;
  std::size_t layer_index = 0;
  SubmoduleKind kind = SubmoduleKind::Other;
  DType dtype = DType::F64;
};

class ModelContainer {
 public:
  ModelContainer() = default;
  ModelContainer(std::size_t total_layers, std::string provenance)
      : total_layers_(total_layers), provenance_(std::move(provenance)) {}

  // Throws DuplicateEntryError, ShapeError (not a matrix) or IndexError
  // (layer index outside [0, total_layers)).
  void add(ModelEntry entry);

  const std::vector<ModelEntry>& entries() const { return entries_; }
  const ModelEntry& at(std::string_view name) const;
  std::optional<std::size_t> find(std::string_view name) const;

  std::size_t total_layers() const { return total_layers_; }
  const std::string& provenance() const { return provenance_; }
  std::size_t param_count() const;

  // Every index in [0, total_layers) is used by at least one entry.
  bool layers_dense() const;

 private:
  std::size_t total_layers_ = 0;
  std::string provenance_;
  std::vector<ModelEntry> entries_;
};

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const IndexRange&) const = default;
};

struct Patch {
  std::size_t id = 0;
  std::string layer_name;
  std::size_t layer_index = 0;
  SubmoduleKind kind = SubmoduleKind::Other;
  IndexRange rows;
  IndexRange cols;

  std::size_t size() const { return rows.size() * cols.size(); }
  bool operator==(const Patch&) const = default;
};

// Tiles each matrix row-major with ragged tiles at the right and bottom edges.
// Ids run over (entry order, tile order).
std::vector<Patch> partition_patches(const ModelContainer& model, std::size_t patch_rows,
                                     std::size_t patch_cols);

Tensor extract_block(const Tensor& matrix, const Patch& p);
void write_block(Tensor& matrix, const Patch& p, const Tensor& block);

}  // namespace minima
