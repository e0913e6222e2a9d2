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

#include "minima/model.hpp"

#include <algorithm>
#include <string>

#include "minima/errors.hpp"

namespace minima {

std::string_view submodule_name(SubmoduleKind k) {
  switch (k) {
    case SubmoduleKind::AttentionProj: return "attention_proj";
    case SubmoduleKind::Ffn: return "ffn";
    case SubmoduleKind::Embedding: return "embedding";
    case SubmoduleKind::Other: return "other";
  }
  return "other";
}

SubmoduleKind parse_submodule(std::string_view name) {
  for (auto k : {SubmoduleKind::AttentionProj, SubmoduleKind::Ffn, SubmoduleKind::Embedding,
                 SubmoduleKind::Other}) {
    if (submodule_name(k) == name) return k;
  }
  throw InvalidArgument("unknown submodule kind '" + std::string(name) + "'");
}

void ModelContainer::add(ModelEntry entry) {
  if (find(entry.name)) throw DuplicateEntryError("duplicate entry '" + entry.name + "'");
  if (entry.matrix.rank() != 2) {
    throw ShapeError("entry '" + entry.name + "' is not a matrix: " +
                     shape_to_string(entry.matrix.shape()));
  }
  if (entry.layer_index >= total_layers_) {
    throw IndexError("entry '" + entry.name + "' has layer index " +
                     std::to_string(entry.layer_index) + " outside [0, " +
                     std::to_string(total_layers_) + ")");
  }
  entries_.push_back(std::move(entry));
}

std::optional<std::size_t> ModelContainer::find(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  return std::nullopt;
}

const ModelEntry& ModelContainer::at(std::string_view name) const {
  const auto i = find(name);
  if (!i) throw IndexError("no entry named '" + std::string(name) + "'");
  return entries_[*i];
}

std::size_t ModelContainer::param_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.matrix.size();
  return n;
}

bool ModelContainer::layers_dense() const {
  std::vector<bool> seen(total_layers_, false);
  for (const auto& e : entries_) seen[e.layer_index] = true;
  return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

std::vector<Patch> partition_patches(const ModelContainer& model, std::size_t patch_rows,
                                     std::size_t patch_cols) {
  if (model.entries().empty()) throw EmptyModelError("model has no entries");
  if (patch_rows < 16 || patch_cols < 16) {
    throw InvalidArgument("patch dimensions must be at least 16");
  }
  std::vector<Patch> out;
  for (const auto& e : model.entries()) {
    const std::size_t m = e.matrix.rows(), n = e.matrix.cols();
    for (std::size_t r = 0; r < m; r += patch_rows) {
      for (std::size_t c = 0; c < n; c += patch_cols) {
        out.push_back(Patch{out.size(), e.name, e.layer_index, e.kind,
                            {r, std::min(m, r + patch_rows)}, {c, std::min(n, c + patch_cols)}});
      }
    }
  }
  return out;
}

Tensor extract_block(const Tensor& matrix, const Patch& p) {
  if (p.rows.end > matrix.rows() || p.cols.end > matrix.cols()) {
    throw IndexError("patch " + std::to_string(p.id) + " exceeds its matrix");
  }
  Tensor block(Shape{p.rows.size(), p.cols.size()});
  for (std::size_t i = 0; i < p.rows.size(); ++i) {
    const double* src = matrix.ptr() + (p.rows.begin + i) * matrix.cols() + p.cols.begin;
    std::copy(src, src + p.cols.size(), block.ptr() + i * p.cols.size());
  }
  return block;
}

void write_block(Tensor& matrix, const Patch& p, const Tensor& block) {
  if (block.rank() != 2 || block.rows() != p.rows.size() || block.cols() != p.cols.size()) {
    throw ShapeError("block shape " + shape_to_string(block.shape()) + " does not match patch " +
                     std::to_string(p.id));
  }
  if (p.rows.end > matrix.rows() || p.cols.end > matrix.cols()) {
    throw IndexError("patch " + std::to_string(p.id) + " exceeds its matrix");
  }
  for (std::size_t i = 0; i < p.rows.size(); ++i) {
    std::copy(block.ptr() + i * p.cols.size(), block.ptr() + (i + 1) * p.cols.size(),
              matrix.ptr() + (p.rows.begin + i) * matrix.cols() + p.cols.begin);
  }
}

}  // namespace minima
