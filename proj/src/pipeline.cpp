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

#include "minima/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "minima/errors.hpp"
#include "minima/sensitivity.hpp"
#include "minima/tensor_ops.hpp"

namespace minima {

std::size_t CompressedModel::param_count() const {
  std::size_t n = 0;
  for (const auto& m : matrices)
    for (const auto& p : m.patches) n += minima::param_count(p.layer);
  return n;
}

std::size_t CompressedModel::dense_param_count() const {
  std::size_t n = 0;
  for (const auto& m : matrices) n += m.rows * m.cols;
  return n;
}

double CompressedModel::ratio() const {
  const std::size_t d = dense_param_count();
  return d ? static_cast<double>(param_count()) / static_cast<double>(d) : 0.0;
}

CompressedModel compress_model(const ModelContainer& model, const CompressionPlan& plan,
                               std::size_t hooi_iters) {
  CompressedModel cm;
  cm.total_layers = model.total_layers();
  cm.provenance = model.provenance();
  cm.mode = plan.mode;
  cm.target_ratio = plan.target_ratio;

  std::map<std::string, std::vector<const PlanEntry*>> by_name;
  for (const auto& e : plan.entries) {
    if (!model.find(e.patch.layer_name)) {
      throw PlanMismatchError("plan names unknown matrix '" + e.patch.layer_name + "'");
    }
    by_name[e.patch.layer_name].push_back(&e);
  }
  for (const auto& entry : model.entries()) {
    const Tensor& w = entry.matrix;
    std::vector<unsigned char> covered(w.size(), 0);
    CompressedMatrix cmat{entry.name, w.rows(), w.cols(), entry.layer_index, entry.kind,
                          entry.dtype, {}};
    for (const PlanEntry* e : by_name[entry.name]) {
      const Patch& p = e->patch;
      if (p.rows.end > w.rows() || p.cols.end > w.cols() || p.rows.size() == 0 ||
          p.cols.size() == 0) {
        throw PlanMismatchError("patch " + std::to_string(p.id) + " lies outside '" + entry.name + "'");
      }
      for (std::size_t i = p.rows.begin; i < p.rows.end; ++i) {
        for (std::size_t j = p.cols.begin; j < p.cols.end; ++j) {
          if (covered[i * w.cols() + j]++) {
            throw PlanMismatchError("patch " + std::to_string(p.id) + " overlaps another patch");
          }
        }
      }
      const Tensor block = extract_block(w, p);
      CompressedLayer layer = e->keep_dense ? make_dense_layer(block)
                                            : decompose_matrix(block, e->shape, e->ranks, hooi_iters);
      cmat.patches.push_back({p, std::move(layer)});
    }
    if (std::find(covered.begin(), covered.end(), 0) != covered.end()) {
      throw PlanMismatchError("plan leaves part of '" + entry.name + "' uncovered");
    }
    cm.matrices.push_back(std::move(cmat));
  }
  return cm;
}

Tensor reassemble(const CompressedMatrix& m) {
  Tensor w(Shape{m.rows, m.cols});
  for (const auto& p : m.patches) write_block(w, p.patch, reconstruct_matrix(p.layer));
  return w;
}

std::vector<Tensor> gaussian_calibration_set(const ModelContainer& model, std::size_t samples,
                                             std::uint64_t seed) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < model.entries().size(); ++i) {
    out.push_back(gaussian_calibration(model.entries()[i].matrix.cols(), samples, seed, i));
  }
  return out;
}

namespace {

Tensor rows_of(const Tensor& x, const IndexRange& r) {
  return extract_block(x, Patch{0, "", 0, SubmoduleKind::Other, r, {0, x.cols()}});
}

void check_calibration(const ModelContainer& original, std::span<const Tensor> calib) {
  if (calib.size() != original.entries().size()) {
    throw ShapeError("calibration set has " + std::to_string(calib.size()) + " entries for " +
                     std::to_string(original.entries().size()) + " matrices");
  }
  for (std::size_t i = 0; i < calib.size(); ++i) {
    if (calib[i].rank() != 2 || calib[i].rows() != original.entries()[i].matrix.cols()) {
      throw ShapeError("calibration inputs for '" + original.entries()[i].name +
                       "' have shape " + shape_to_string(calib[i].shape()));
    }
  }
}

double matrix_objective(const Tensor& w, const Tensor& w_hat, const Tensor& x) {
  Tensor e = w;
  for (std::size_t i = 0; i < e.size(); ++i) e[i] -= w_hat[i];
  const double n = frobenius_norm(matmul(e, x));
  return n * n;
}

Tensor reassemble_patches(const std::vector<PatchLayer>& patches, const CompressedMatrix& m) {
  CompressedMatrix copy{m.name, m.rows, m.cols, m.layer_index, m.kind, m.dtype, patches};
  return reassemble(copy);
}

}  // namespace

CompressedModel heal(const CompressedModel& cm, const ModelContainer& original,
                     std::span<const Tensor> calib, const HealOptions& options) {
  check_calibration(original, calib);
  CompressedModel out = cm;
  out.heal_log.clear();
  for (auto& m : out.matrices) {
    const auto idx = original.find(m.name);
    if (!idx) throw PlanMismatchError("original model lacks '" + m.name + "'");
    const Tensor& w = original.entries()[*idx].matrix;
    if (w.rows() != m.rows || w.cols() != m.cols) {
      throw PlanMismatchError("shape of '" + m.name + "' differs from the original");
    }
    const Tensor& x = calib[*idx];
    const std::vector<PatchLayer> saved = m.patches;
    const std::size_t first = out.heal_log.size();
    for (auto& p : m.patches) {
      if (p.layer.family == Family::Dense) continue;
      HealRecord rec =
          heal_layer(p.layer, extract_block(w, p.patch), rows_of(x, p.patch.cols), options);
      rec.patch_id = p.patch.id;
      out.heal_log.push_back(std::move(rec));
    }
    if (out.heal_log.size() == first) continue;
    if (matrix_objective(w, reassemble(m), x) > matrix_objective(w, reassemble_patches(saved, m), x)) {
      m.patches = saved;
      for (std::size_t i = first; i < out.heal_log.size(); ++i) out.heal_log[i].reverted = true;
    }
  }
  std::sort(out.heal_log.begin(), out.heal_log.end(),
            [](const HealRecord& a, const HealRecord& b) { return a.patch_id < b.patch_id; });
  return out;
}

QualityReport evaluate(const ModelContainer& original, const CompressedModel& before,
                       const CompressedModel& after, std::span<const Tensor> calib) {
  check_calibration(original, calib);
  if (before.matrices.size() != original.entries().size() ||
      after.matrices.size() != original.entries().size()) {
    throw PlanMismatchError("compressed model does not match the original");
  }
  QualityReport r;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < original.entries().size(); ++i) {
    const auto& e = original.entries()[i];
    const auto& mb = before.matrices[i];
    const auto& ma = after.matrices[i];
    if (mb.name != e.name || ma.name != e.name) throw PlanMismatchError("matrix order differs");
    LayerQuality q{e.name, e.layer_index, e.kind, 0.0, 0.0, false, 0, e.matrix.size()};
    for (const auto& p : ma.patches) q.params += param_count(p.layer);
    q.degenerate = frobenius_norm(matmul(e.matrix, calib[i])) == 0.0;
    if (!q.degenerate) {
      q.deviation_before = output_deviation(e.matrix, reassemble(mb), calib[i]);
      q.deviation_after = output_deviation(e.matrix, reassemble(ma), calib[i]);
      r.mean_before += q.deviation_before;
      r.mean_after += q.deviation_after;
      r.max_before = std::max(r.max_before, q.deviation_before);
      r.max_after = std::max(r.max_after, q.deviation_after);
      ++counted;
    }
    r.params += q.params;
    r.dense_params += q.dense_params;
    r.layers.push_back(std::move(q));
  }
  if (counted) {
    r.mean_before /= counted;
    r.mean_after /= counted;
  }
  return r;
}

QualityReport evaluate(const ModelContainer& original, const CompressedModel& cm,
                       std::span<const Tensor> calib) {
  return evaluate(original, cm, cm, calib);
}

}  // namespace minima
