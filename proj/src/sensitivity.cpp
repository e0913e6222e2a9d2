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

#include "minima/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "minima/errors.hpp"
#include "minima/linalg.hpp"
#include "minima/rng.hpp"
#include "minima/tensor_ops.hpp"

namespace minima {

const std::array<const char*, kFeatureCount>& FeatureVector::names() {
  static const std::array<const char*, kFeatureCount> n = {
      "stable_rank", "top10pct_energy", "log_condition", "spectral_entropy",
      "mean_abs",    "max_abs",         "frac_small",    "row_norm_cv",
      "normalized_layer_index", "is_attention_proj", "is_ffn", "is_embedding"};
  return n;
}

FeatureVector extract_features(const Tensor& w, std::size_t layer_index, std::size_t total_layers,
                               SubmoduleKind kind) {
  if (w.rank() != 2) throw ShapeError("extract_features expects a matrix");
  if (total_layers == 0) throw InvalidArgument("total_layers must be positive");
  FeatureVector f;
  auto& v = f.values;

  const std::vector<double> sigma = svd(w).singular_values;
  double energy = 0.0;
  for (double s : sigma) energy += s * s;
  const double s1 = sigma.empty() ? 0.0 : sigma.front();
  if (s1 > 0.0) {
    v[0] = energy / (s1 * s1);
    const auto top = static_cast<std::size_t>(
        std::ceil(0.1 * static_cast<double>(std::min(w.rows(), w.cols()))));
    double head = 0.0;
    for (std::size_t i = 0; i < top && i < sigma.size(); ++i) head += sigma[i] * sigma[i];
    v[1] = head / energy;
    double smin = s1;
    for (double s : sigma) {
      if (s > 0.0) smin = s;
    }
    v[2] = std::log10(s1 / smin);
    double h = 0.0;
    for (double s : sigma) {
      const double p = s * s / energy;
      if (p > 0.0) h -= p * std::log(p);
    }
    v[3] = std::max(h, 0.0);
  }

  double sum_abs = 0.0, max_abs = 0.0;
  for (double x : w.data()) {
    sum_abs += std::abs(x);
    max_abs = std::max(max_abs, std::abs(x));
  }
  std::size_t small = 0;
  for (double x : w.data()) small += std::abs(x) < 1e-3 * max_abs;
  v[4] = sum_abs / static_cast<double>(w.size());
  v[5] = max_abs;
  v[6] = static_cast<double>(small) / static_cast<double>(w.size());

  std::vector<double> norms(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    norms[i] = std::sqrt(squared_norm(w.data().subspan(i * w.cols(), w.cols())));
  }
  const double mean = std::accumulate(norms.begin(), norms.end(), 0.0) / norms.size();
  double var = 0.0;
  for (double n : norms) var += (n - mean) * (n - mean);
  var /= norms.size();
  v[7] = mean > 0.0 ? std::sqrt(var) / mean : 0.0;

  v[8] = static_cast<double>(layer_index) / static_cast<double>(total_layers);
  v[9] = kind == SubmoduleKind::AttentionProj;
  v[10] = kind == SubmoduleKind::Ffn;
  v[11] = kind == SubmoduleKind::Embedding;
  return f;
}

double output_deviation(const Tensor& w, const Tensor& w_hat, const Tensor& x) {
  if (w.shape() != w_hat.shape()) throw ShapeError("output_deviation: weight shapes differ");
  Tensor diff = w;
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= w_hat[i];
  const double ref = frobenius_norm(matmul(w, x));
  const double err = frobenius_norm(matmul(diff, x));
  if (ref == 0.0) return err == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return err / ref;
}

RankSpec candidate_ranks(const ModeShape& shape, Family family, double ratio) {
  if (!(ratio > 0.0)) throw InvalidArgument("ratio must be positive");
  if (ratio >= 1.0) return RankSpec{family, maximal_ranks(family, shape.active())};
  const auto budget = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(ratio * static_cast<double>(shape.rows() * shape.cols()))));
  return select_ranks(shape, family, TruncationPolicy::param_budget(budget));
}

std::vector<ProbeRecord> probe_patch(const Tensor& w, std::size_t patch_id,
                                     std::span<const Family> families,
                                     std::span<const double> ratio_grid, const Tensor& calib,
                                     std::size_t hooi_iters, std::vector<std::string>* skipped) {
  if (calib.rank() != 2 || calib.rows() != w.cols()) {
    throw ShapeError("calibration inputs " + shape_to_string(calib.shape()) +
                     " do not match patch columns " + std::to_string(w.cols()));
  }
  if (calib.cols() < 8) throw InvalidArgument("probing needs at least 8 calibration samples");
  const ModeShape shape = choose_mode_shape(w.rows(), w.cols());
  std::vector<ProbeRecord> out;
  for (Family fam : families) {
    for (double ratio : ratio_grid) {
      auto skip = [&](const Error& e) {
        if (!skipped) return;
        std::ostringstream msg;
        msg << "patch " << patch_id << " " << family_name(fam) << "@" << ratio << ": " << e.what();
        skipped->push_back(msg.str());
      };
      try {
        const RankSpec spec = candidate_ranks(shape, fam, ratio);
        const CompressedLayer c = decompose_matrix(w, shape, spec, hooi_iters);
        out.push_back({patch_id, fam, ratio, spec, param_count(c),
                       output_deviation(w, reconstruct_matrix(c), calib)});
      } catch (const InfeasibleBudgetError& e) {
        skip(e);
      } catch (const RankError& e) {
        skip(e);
      }
    }
  }
  return out;
}

namespace {

// Flat parameter layout used during training.
struct Layout {
  std::size_t heads;
  std::size_t w1 = 0;
  std::size_t b1 = w1 + kHiddenUnits * kFeatureCount;
  std::size_t sw = b1 + kHiddenUnits;
  std::size_t sb = sw + kHiddenUnits;
  std::size_t hw = sb + 1;
  std::size_t hb;
  std::size_t total;
  explicit Layout(std::size_t h) : heads(h), hb(hw + h * kHiddenUnits), total(hb + h) {}
};

std::vector<double> pack(const Predictor& p, const Layout& l) {
  std::vector<double> x(l.total);
  std::copy(p.w1.begin(), p.w1.end(), x.begin() + l.w1);
  std::copy(p.b1.begin(), p.b1.end(), x.begin() + l.b1);
  std::copy(p.score_w.begin(), p.score_w.end(), x.begin() + l.sw);
  x[l.sb] = p.score_b;
  std::copy(p.head_w.begin(), p.head_w.end(), x.begin() + l.hw);
  std::copy(p.head_b.begin(), p.head_b.end(), x.begin() + l.hb);
  return x;
}

void unpack(const std::vector<double>& x, const Layout& l, Predictor& p) {
  p.w1.assign(x.begin() + l.w1, x.begin() + l.b1);
  p.b1.assign(x.begin() + l.b1, x.begin() + l.sw);
  p.score_w.assign(x.begin() + l.sw, x.begin() + l.sb);
  p.score_b = x[l.sb];
  p.head_w.assign(x.begin() + l.hw, x.begin() + l.hb);
  p.head_b.assign(x.begin() + l.hb, x.begin() + l.total);
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double logit(double p) {
  p = std::clamp(p, 1e-6, 1.0 - 1e-6);
  return std::log(p / (1.0 - p));
}

struct Hidden {
  std::array<double, kHiddenUnits> h{};
  std::array<double, kFeatureCount> z{};
};

Hidden hidden_layer(const std::vector<double>& x, const Layout& l, const Predictor& p,
                    const FeatureVector& f) {
  Hidden out;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    out.z[i] = (f.values[i] - p.feature_mean[i]) / p.feature_scale[i];
  }
  for (std::size_t u = 0; u < kHiddenUnits; ++u) {
    double a = x[l.b1 + u];
    for (std::size_t i = 0; i < kFeatureCount; ++i) a += x[l.w1 + u * kFeatureCount + i] * out.z[i];
    out.h[u] = std::tanh(a);
  }
  return out;
}

struct Counts {
  std::size_t head_targets = 0;
  std::size_t score_targets = 0;
};

Counts count_targets(std::span<const TrainingExample> examples) {
  Counts c;
  for (const auto& e : examples) {
    for (const auto& t : e.targets) c.head_targets += t.has_value();
    c.score_targets += e.score_target.has_value();
  }
  return c;
}

// Loss and (optionally) its gradient at parameters x.
double loss_and_grad(const std::vector<double>& x, const Layout& l, const Predictor& p,
                     std::span<const TrainingExample> examples, const Counts& counts,
                     std::vector<double>* grad) {
  if (grad) std::fill(grad->begin(), grad->end(), 0.0);
  double head_sse = 0.0, score_sse = 0.0;
  const double head_norm = counts.head_targets ? 1.0 / counts.head_targets : 0.0;
  const double score_norm = counts.score_targets ? 1.0 / counts.score_targets : 0.0;
  for (const auto& e : examples) {
    const Hidden hid = hidden_layer(x, l, p, e.features);
    std::array<double, kHiddenUnits> dh{};
    for (std::size_t j = 0; j < l.heads; ++j) {
      if (!e.targets[j]) continue;
      double y = x[l.hb + j];
      for (std::size_t u = 0; u < kHiddenUnits; ++u) y += x[l.hw + j * kHiddenUnits + u] * hid.h[u];
      const double r = y - *e.targets[j];
      head_sse += r * r;
      if (!grad) continue;
      const double dy = 2.0 * r * head_norm;
      (*grad)[l.hb + j] += dy;
      for (std::size_t u = 0; u < kHiddenUnits; ++u) {
        (*grad)[l.hw + j * kHiddenUnits + u] += dy * hid.h[u];
        dh[u] += dy * x[l.hw + j * kHiddenUnits + u];
      }
    }
    if (e.score_target) {
      double a = x[l.sb];
      for (std::size_t u = 0; u < kHiddenUnits; ++u) a += x[l.sw + u] * hid.h[u];
      const double s = sigmoid(a);
      const double r = s - *e.score_target;
      score_sse += r * r;
      if (grad) {
        const double da = 2.0 * r * score_norm * s * (1.0 - s);
        (*grad)[l.sb] += da;
        for (std::size_t u = 0; u < kHiddenUnits; ++u) {
          (*grad)[l.sw + u] += da * hid.h[u];
          dh[u] += da * x[l.sw + u];
        }
      }
    }
    if (!grad) continue;
    for (std::size_t u = 0; u < kHiddenUnits; ++u) {
      const double dpre = dh[u] * (1.0 - hid.h[u] * hid.h[u]);
      (*grad)[l.b1 + u] += dpre;
      for (std::size_t i = 0; i < kFeatureCount; ++i) {
        (*grad)[l.w1 + u * kFeatureCount + i] += dpre * hid.z[i];
      }
    }
  }
  return head_sse * head_norm + score_sse * score_norm;
}

}  // namespace

PredictorOutput forward(const Predictor& p, const FeatureVector& f) {
  const Layout l(p.heads.size());
  const std::vector<double> x = pack(p, l);
  const Hidden hid = hidden_layer(x, l, p, f);
  PredictorOutput out;
  double a = p.score_b;
  for (std::size_t u = 0; u < kHiddenUnits; ++u) a += p.score_w[u] * hid.h[u];
  out.score = sigmoid(a);
  out.heads.resize(p.heads.size());
  for (std::size_t j = 0; j < p.heads.size(); ++j) {
    double y = p.head_b[j];
    for (std::size_t u = 0; u < kHiddenUnits; ++u) y += p.head_w[j * kHiddenUnits + u] * hid.h[u];
    out.heads[j] = y;
  }
  return out;
}

Predictor train_predictor(std::span<const TrainingExample> examples, std::vector<Head> heads,
                          const TrainOptions& options) {
  const std::size_t nh = heads.size();
  for (const auto& e : examples) {
    if (e.targets.size() != nh) throw ShapeError("training example has the wrong number of targets");
  }
  const Counts counts = count_targets(examples);
  if (counts.head_targets + counts.score_targets < 32) {
    throw InvalidArgument("training needs at least 32 labelled records, got " +
                          std::to_string(counts.head_targets + counts.score_targets));
  }
  if (!(options.learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");

  Predictor p;
  p.heads = std::move(heads);
  p.options = options;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    double mean = 0.0;
    for (const auto& e : examples) mean += e.features.values[i];
    mean /= examples.size();
    double var = 0.0;
    for (const auto& e : examples) var += std::pow(e.features.values[i] - mean, 2);
    const double sd = std::sqrt(var / examples.size());
    p.feature_mean[i] = mean;
    p.feature_scale[i] = sd > 1e-12 ? sd : 1.0;
  }

  const Layout l(nh);
  Rng rng(options.seed, 0x5E75);
  std::vector<double> x(l.total, 0.0);
  std::vector<bool> frozen(l.total, false);
  for (std::size_t k = l.w1; k < l.b1; ++k) x[k] = rng.normal() / std::sqrt(double(kFeatureCount));
  for (std::size_t k = l.sw; k < l.sb; ++k) x[k] = 0.1 * rng.normal() / std::sqrt(double(kHiddenUnits));
  for (std::size_t k = l.hw; k < l.hb; ++k) x[k] = 0.1 * rng.normal() / std::sqrt(double(kHiddenUnits));

  auto freeze_constant = [&](std::size_t w_begin, std::size_t b, double value) {
    for (std::size_t u = 0; u < kHiddenUnits; ++u) {
      x[w_begin + u] = 0.0;
      frozen[w_begin + u] = true;
    }
    x[b] = value;
    frozen[b] = true;
  };

  std::size_t constant_heads = 0;
  for (std::size_t j = 0; j < nh; ++j) {
    double lo = INFINITY, hi = -INFINITY, sum = 0.0;
    std::size_t n = 0;
    for (const auto& e : examples) {
      if (!e.targets[j]) continue;
      lo = std::min(lo, *e.targets[j]);
      hi = std::max(hi, *e.targets[j]);
      sum += *e.targets[j];
      ++n;
    }
    if (n == 0) {
      freeze_constant(l.hw + j * kHiddenUnits, l.hb + j, 0.0);
      ++constant_heads;
      p.log.push_back("head " + std::to_string(j) + " has no targets; fixed at 0");
    } else if (hi - lo <= 1e-15 * std::max(1.0, std::abs(hi))) {
      freeze_constant(l.hw + j * kHiddenUnits, l.hb + j, lo);
      ++constant_heads;
      p.log.push_back("head " + std::to_string(j) + " targets are constant; fixed");
    } else {
      x[l.hb + j] = sum / n;
    }
  }
  bool score_constant = true;
  {
    double lo = INFINITY, hi = -INFINITY, sum = 0.0;
    for (const auto& e : examples) {
      if (!e.score_target) continue;
      lo = std::min(lo, *e.score_target);
      hi = std::max(hi, *e.score_target);
      sum += *e.score_target;
    }
    if (counts.score_targets == 0) {
      freeze_constant(l.sw, l.sb, 0.0);
    } else if (hi - lo <= 1e-15) {
      freeze_constant(l.sw, l.sb, logit(lo));
    } else {
      score_constant = false;
      x[l.sb] = logit(sum / counts.score_targets);
    }
  }
  const bool degenerate = constant_heads == nh && score_constant;
  if (degenerate) p.log.push_back("degenerate targets: predictor is constant");

  std::vector<double> grad(l.total), m(l.total, 0.0), v(l.total, 0.0);
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double b1t = 1.0, b2t = 1.0;
  std::vector<double> best = x;
  p.initial_mse = loss_and_grad(x, l, p, examples, counts, nullptr);
  double best_loss = p.initial_mse;
  for (std::size_t epoch = 0; epoch < options.epochs && !degenerate; ++epoch) {
    const double loss = loss_and_grad(x, l, p, examples, counts, &grad);
    if (loss < best_loss) {
      best_loss = loss;
      best = x;
    }
    if (!std::isfinite(loss)) throw NumericsError("predictor training diverged");
    b1t *= beta1;
    b2t *= beta2;
    for (std::size_t k = 0; k < l.total; ++k) {
      if (frozen[k]) continue;
      m[k] = beta1 * m[k] + (1.0 - beta1) * grad[k];
      v[k] = beta2 * v[k] + (1.0 - beta2) * grad[k] * grad[k];
      x[k] -= options.learning_rate * (m[k] / (1.0 - b1t)) / (std::sqrt(v[k] / (1.0 - b2t)) + eps);
    }
  }
  const double last = loss_and_grad(x, l, p, examples, counts, nullptr);
  if (last < best_loss) {
    best_loss = last;
    best = x;
  }
  unpack(best, l, p);
  p.final_mse = best_loss;
  std::ostringstream msg;
  msg << "trained " << options.epochs << " epochs: mse " << p.initial_mse << " -> " << p.final_mse;
  p.log.push_back(msg.str());
  return p;
}

double head_mse(const Predictor& p, std::span<const TrainingExample> examples) {
  double sse = 0.0;
  std::size_t n = 0;
  for (const auto& e : examples) {
    const PredictorOutput out = forward(p, e.features);
    for (std::size_t j = 0; j < p.heads.size(); ++j) {
      if (!e.targets[j]) continue;
      sse += std::pow(out.heads[j] - *e.targets[j], 2);
      ++n;
    }
  }
  return n ? sse / n : 0.0;
}

std::vector<Recommendation> recommend(std::span<const HeadPrediction> table, double cap) {
  std::vector<Recommendation> out;
  for (const auto& h : table) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const Recommendation& r) { return r.family == h.family; });
    if (it == out.end()) {
      out.push_back({h.family, true, 1.0, 0.0});
      it = out.end() - 1;
    }
    if (h.expected() <= cap && (it->keep_dense || h.ratio < it->ratio)) {
      *it = {h.family, false, h.ratio, h.expected()};
    }
  }
  return out;
}

SensitivityRecord predict(const Predictor& p, const FeatureVector& f, std::size_t patch_id,
                          double cap) {
  const PredictorOutput out = forward(p, f);
  SensitivityRecord r;
  r.patch_id = patch_id;
  r.score = out.score;
  for (std::size_t j = 0; j < p.heads.size(); ++j) {
    r.predictions.push_back({p.heads[j].family, p.heads[j].ratio, std::max(0.0, out.heads[j]), {}});
  }
  r.recommendations = recommend(r.predictions, cap);
  return r;
}

std::vector<TrainingExample> build_training_set(std::span<const PatchAnalysis> probed,
                                                std::span<const Head> heads) {
  std::vector<TrainingExample> out;
  std::vector<double> mean_deg;
  for (const auto& pa : probed) {
    TrainingExample e;
    e.features = pa.features;
    e.targets.resize(heads.size());
    double sum = 0.0;
    for (const auto& rec : pa.probes) {
      sum += rec.measured_degradation;
      for (std::size_t j = 0; j < heads.size(); ++j) {
        if (heads[j] == Head{rec.family, rec.target_ratio}) e.targets[j] = rec.measured_degradation;
      }
    }
    mean_deg.push_back(pa.probes.empty() ? 0.0 : sum / pa.probes.size());
    out.push_back(std::move(e));
  }
  // Average ranks for ties, scaled to [0, 1].
  std::vector<std::size_t> order(out.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return mean_deg[a] < mean_deg[b]; });
  const double denom = out.size() > 1 ? static_cast<double>(out.size() - 1) : 1.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && mean_deg[order[j]] == mean_deg[order[i]]) ++j;
    const double rank = out.size() > 1 ? 0.5 * static_cast<double>(i + j - 1) / denom : 0.5;
    for (std::size_t k = i; k < j; ++k) out[order[k]].score_target = rank;
    i = j;
  }
  return out;
}

Tensor gaussian_calibration(std::size_t cols, std::size_t samples, std::uint64_t seed,
                            std::size_t entry_index) {
  Rng rng(seed, 0xCA11B000ULL + entry_index);
  std::vector<double> v(cols * samples);
  for (double& x : v) x = rng.normal();
  return Tensor(Shape{cols, samples}, std::move(v));
}

Analysis analyze_model(const ModelContainer& model, const AnalyzeOptions& options) {
  if (options.probe_stride == 0) throw InvalidArgument("probe_stride must be positive");
  if (options.families.empty() || options.ratio_grid.empty()) {
    throw InvalidArgument("analysis needs at least one family and one ratio");
  }
  Analysis result;
  const auto patches = partition_patches(model, options.patch_rows, options.patch_cols);

  std::map<std::pair<std::size_t, SubmoduleKind>, std::size_t> group_pos;
  std::map<std::size_t, Tensor> calib;
  for (const Patch& patch : patches) {
    const std::size_t entry = *model.find(patch.layer_name);
    const Tensor& w = model.entries()[entry].matrix;
    const Tensor block = extract_block(w, patch);
    PatchAnalysis pa;
    pa.patch = patch;
    pa.shape = choose_mode_shape(block.rows(), block.cols());
    pa.features = extract_features(block, patch.layer_index, model.total_layers(), patch.kind);
    const std::size_t pos = group_pos[{patch.layer_index, patch.kind}]++;
    if (pos % options.probe_stride == 0) {
      auto it = calib.find(entry);
      if (it == calib.end()) {
        it = calib.emplace(entry, gaussian_calibration(w.cols(), options.calib_samples,
                                                       options.seed, entry)).first;
      }
      const Tensor x = extract_block(it->second, Patch{0, "", 0, SubmoduleKind::Other, patch.cols,
                                                       {0, options.calib_samples}});
      pa.probed = true;
      pa.probes = probe_patch(block, patch.id, options.families, options.ratio_grid, x,
                              options.hooi_iters, &result.log);
    }
    result.patches.push_back(std::move(pa));
  }

  std::vector<Head> heads;
  for (Family f : options.families) {
    for (double r : options.ratio_grid) heads.push_back({f, r});
  }
  std::vector<PatchAnalysis> probed;
  for (const auto& pa : result.patches) {
    if (pa.probed) probed.push_back(pa);
  }
  const auto examples = build_training_set(probed, heads);
  result.predictor = train_predictor(examples, heads, options.train);
  result.log.insert(result.log.end(), result.predictor.log.begin(), result.predictor.log.end());

  for (auto& pa : result.patches) {
    pa.record = predict(result.predictor, pa.features, pa.patch.id, options.degradation_cap);
    for (auto& h : pa.record.predictions) {
      for (const auto& rec : pa.probes) {
        if (rec.family == h.family && rec.target_ratio == h.ratio) h.measured = rec.measured_degradation;
      }
    }
    pa.record.recommendations = recommend(pa.record.predictions, options.degradation_cap);
  }
  return result;
}

}  // namespace minima
