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

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "minima/decompositions.hpp"
#include "minima/model.hpp"
#include "minima/tensor.hpp"

namespace minima {

inline constexpr std::size_t kFeatureCount = 12;

struct FeatureVector {
  // stable_rank, top10pct_energy, log_condition, spectral_entropy, mean_abs,
  // max_abs, frac_small, row_norm_cv, normalized_layer_index, is_attention_proj,
  // is_ffn, is_embedding
  std::array<double, kFeatureCount> values{};

  static const std::array<const char*, kFeatureCount>& names();
};

// An all-zero block yields stable_rank 0 and log_condition 0.
FeatureVector extract_features(const Tensor& w, std::size_t layer_index, std::size_t total_layers,
                               SubmoduleKind kind);

struct ProbeRecord {
  std::size_t patch_id = 0;
  Family family = Family::Tucker;
  double target_ratio = 1.0;
  RankSpec ranks;
  std::size_t params = 0;
  double measured_degradation = 0.0;
};

// ||(W - W_hat) X||_F / ||W X||_F, or 0 when W X vanishes and W_hat X matches it.
double output_deviation(const Tensor& w, const Tensor& w_hat, const Tensor& x);

// Rank selection used for every (family, ratio) candidate: a parameter budget of
// floor(ratio * size), or the maximal ranks when ratio >= 1.
RankSpec candidate_ranks(const ModeShape& shape, Family family, double ratio);

// Infeasible candidates are skipped and described in *skipped when given.
std::vector<ProbeRecord> probe_patch(const Tensor& w, std::size_t patch_id,
                                     std::span<const Family> families,
                                     std::span<const double> ratio_grid, const Tensor& calib,
                                     std::size_t hooi_iters = 2,
                                     std::vector<std::string>* skipped = nullptr);

struct Head {
  Family family = Family::Tucker;
  double ratio = 1.0;
  bool operator==(const Head&) const = default;
};

struct TrainingExample {
  FeatureVector features;
  std::vector<std::optional<double>> targets;  // one slot per head
  std::optional<double> score_target;
};

struct TrainOptions {
  std::size_t epochs = 2000;
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kHiddenUnits = 16;

struct Predictor {
  std::vector<Head> heads;
  std::array<double, kFeatureCount> feature_mean{};
  std::array<double, kFeatureCount> feature_scale{};
  std::vector<double> w1;  // kHiddenUnits x kFeatureCount
  std::vector<double> b1;
  std::vector<double> score_w;
  double score_b = 0.0;
  std::vector<double> head_w;  // heads x kHiddenUnits
  std::vector<double> head_b;
  TrainOptions options;
  double initial_mse = 0.0;
  double final_mse = 0.0;
  std::vector<std::string> log;
};

struct PredictorOutput {
  double score = 0.0;
  std::vector<double> heads;
};

PredictorOutput forward(const Predictor& p, const FeatureVector& f);

// Full-batch Adam on the summed head and score MSE. Heads whose targets are all
// equal are fixed to that constant. Returns the lowest-loss parameters seen, so
// final_mse <= initial_mse.
Predictor train_predictor(std::span<const TrainingExample> examples, std::vector<Head> heads,
                          const TrainOptions& options);

// Mean squared error of the degradation heads alone.
double head_mse(const Predictor& p, std::span<const TrainingExample> examples);

struct HeadPrediction {
  Family family = Family::Tucker;
  double ratio = 1.0;
  double predicted = 0.0;
  std::optional<double> measured;

  double expected() const { return measured.value_or(predicted); }
};

struct Recommendation {
  Family family = Family::Tucker;
  bool keep_dense = true;
  double ratio = 1.0;
  double predicted_degradation = 0.0;
};

struct SensitivityRecord {
  std::size_t patch_id = 0;
  double score = 0.0;
  std::vector<HeadPrediction> predictions;
  std::vector<Recommendation> recommendations;
};

// Recommendation per family: the smallest grid ratio whose expected degradation
// is within the cap, else keep-dense.
std::vector<Recommendation> recommend(std::span<const HeadPrediction> table, double cap);

SensitivityRecord predict(const Predictor& p, const FeatureVector& f, std::size_t patch_id,
                          double cap);

struct AnalyzeOptions {
  std::size_t patch_rows = 64;
  std::size_t patch_cols = 64;
  std::vector<Family> families{Family::Tucker, Family::TT, Family::TR};
  std::vector<double> ratio_grid{0.5, 0.35, 0.25, 0.15};
  double degradation_cap = 0.02;
  std::size_t probe_stride = 4;
  std::size_t calib_samples = 64;
  std::size_t hooi_iters = 2;
  TrainOptions train;
  std::uint64_t seed = 0;
};

struct PatchAnalysis {
  Patch patch;
  ModeShape shape;
  FeatureVector features;
  bool probed = false;
  std::vector<ProbeRecord> probes;
  SensitivityRecord record;
};

struct Analysis {
  std::vector<PatchAnalysis> patches;
  Predictor predictor;
  std::vector<std::string> log;
};

// Score targets are the normalized rank of each probed patch's mean degradation.
std::vector<TrainingExample> build_training_set(std::span<const PatchAnalysis> probed,
                                                std::span<const Head> heads);

// Seeded Gaussian calibration inputs for one matrix (cols x samples), shared by
// all of its patches; entry_index selects the stream.
Tensor gaussian_calibration(std::size_t cols, std::size_t samples, std::uint64_t seed,
                            std::size_t entry_index);

Analysis analyze_model(const ModelContainer& model, const AnalyzeOptions& options);

}  // namespace minima
