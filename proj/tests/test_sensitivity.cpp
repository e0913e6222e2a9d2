#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "minima/errors.hpp"
#include "minima/sensitivity.hpp"
#include "minima/synth.hpp"
#include "minima/tensor_ops.hpp"
#include "test_util.hpp"

using namespace minima;
using minima::testing::random_matrix;

namespace {

constexpr std::size_t kStableRank = 0, kTop10 = 1, kLogCond = 2, kEntropy = 3, kMeanAbs = 4,
                      kFracSmall = 6;

FeatureVector random_features(Rng& rng) {
  FeatureVector f;
  for (double& v : f.values) v = rng.normal();
  return f;
}

// 8 x 8 x 8 x 8 outer product, viewed as a 64 x 64 matrix: rank 1 in every family.
Tensor rank_one_patch(Rng& rng) {
  std::vector<double> v[4];
  for (auto& x : v) {
    x.resize(8);
    for (double& e : x) e = rng.normal();
  }
  Tensor t(Shape{64, 64});
  for (std::size_t a = 0; a < 8; ++a)
    for (std::size_t b = 0; b < 8; ++b)
      for (std::size_t c = 0; c < 8; ++c)
        for (std::size_t d = 0; d < 8; ++d) t[((a * 8 + b) * 8 + c) * 8 + d] = v[0][a] * v[1][b] * v[2][c] * v[3][d];
  return t;
}

double linear_label(const FeatureVector& f) {
  static const double w[kFeatureCount] = {0.05, -0.03, 0.02, 0.04, -0.01, 0.03,
                                          0.02, -0.04, 0.01, 0.02, -0.02, 0.03};
  double s = 0.2;
  for (std::size_t i = 0; i < kFeatureCount; ++i) s += w[i] * f.values[i];
  return s;
}

std::vector<TrainingExample> labelled(std::size_t n, Rng& rng) {
  std::vector<TrainingExample> out(n);
  for (auto& e : out) {
    e.features = random_features(rng);
    e.targets = {linear_label(e.features)};
  }
  return out;
}

}  // namespace

TEST_CASE("feature examples") {
  Tensor eye(Shape{4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye[i * 5] = 1.0;
  const auto f = extract_features(eye, 3, 12, SubmoduleKind::Ffn).values;
  CHECK(f[kStableRank] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(f[kLogCond] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(f[kMeanAbs] == doctest::Approx(0.25));
  CHECK(f[kFracSmall] == doctest::Approx(0.75));
  CHECK(f[kEntropy] == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(f[8] == doctest::Approx(0.25));
  CHECK(f[9] == 0.0);
  CHECK(f[10] == 1.0);
  CHECK(f[11] == 0.0);

  const Tensor r1(Shape{2, 2}, {1, 2, 2, 4});
  const auto g = extract_features(r1, 0, 1, SubmoduleKind::AttentionProj).values;
  CHECK(g[kStableRank] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g[kTop10] == doctest::Approx(1.0).epsilon(1e-12));

  const auto z = extract_features(Tensor(Shape{8, 8}), 0, 1, SubmoduleKind::Other).values;
  CHECK(z[kStableRank] == 0.0);
  CHECK(z[kLogCond] == 0.0);
}

TEST_CASE("features are finite, bounded and deterministic") {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const Tensor w = random_matrix(8 + rng.below(40), 8 + rng.below(40), rng);
    const auto f = extract_features(w, trial % 12, 12, SubmoduleKind::Embedding).values;
    for (double v : f) CHECK(std::isfinite(v));
    CHECK(f[kTop10] >= 0.0);
    CHECK(f[kTop10] <= 1.0 + 1e-12);
    CHECK(f[kFracSmall] >= 0.0);
    CHECK(f[kFracSmall] <= 1.0);
    CHECK(f[kEntropy] >= 0.0);
    CHECK(extract_features(w, trial % 12, 12, SubmoduleKind::Embedding).values == f);
  }
}

TEST_CASE("probe at full ratio and on a rank-one patch is exact") {
  Rng rng(5);
  const Tensor calib = gaussian_calibration(64, 32, 1, 0);
  const std::vector<Family> families{Family::Tucker, Family::TT, Family::TR};
  const std::vector<double> full{1.0};
  for (const auto& r : probe_patch(random_matrix(64, 64, rng), 0, families, full, calib)) {
    CHECK(r.measured_degradation <= 1e-9);
  }
  const std::vector<double> grid{0.5, 0.35, 0.25, 0.15, 0.05};
  std::vector<std::string> skipped;
  const auto recs = probe_patch(rank_one_patch(rng), 7, families, grid, calib, 2, &skipped);
  CHECK(recs.size() + skipped.size() == families.size() * grid.size());
  CHECK(recs.size() >= 12);
  for (const auto& r : recs) {
    CHECK(r.patch_id == 7);
    CHECK(r.measured_degradation <= 1e-9);
  }
}

TEST_CASE("probe degradation is monotone in the ratio") {
  Rng rng(9);
  const std::vector<Family> families{Family::Tucker, Family::TT, Family::TR};
  const std::vector<double> grid{0.5, 0.35, 0.25, 0.15};
  const Tensor calib = gaussian_calibration(64, 64, 2, 0);
  for (int trial = 0; trial < 5; ++trial) {
    const auto recs = probe_patch(random_matrix(64, 64, rng), trial, families, grid, calib);
    for (Family fam : families) {
      std::vector<ProbeRecord> mine;
      for (const auto& r : recs)
        if (r.family == fam) mine.push_back(r);
      for (std::size_t i = 1; i < mine.size(); ++i) {
        CHECK(mine[i].target_ratio < mine[i - 1].target_ratio);
        CHECK(mine[i].params <= mine[i - 1].params);
        CHECK(mine[i].measured_degradation >= mine[i - 1].measured_degradation - 1e-9);
      }
    }
  }
}

TEST_CASE("output deviation matches its definition") {
  Rng rng(11);
  const Tensor w = random_matrix(6, 5, rng), x = random_matrix(5, 9, rng);
  Tensor w_hat = w;
  for (std::size_t i = 0; i < w_hat.size(); ++i) w_hat[i] += 0.1 * rng.normal();
  double num = 0, den = 0;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t s = 0; s < 9; ++s) {
      double y = 0, yh = 0;
      for (std::size_t k = 0; k < 5; ++k) {
        y += w.at(i, k) * x.at(k, s);
        yh += w_hat.at(i, k) * x.at(k, s);
      }
      num += (y - yh) * (y - yh);
      den += y * y;
    }
  CHECK(output_deviation(w, w_hat, x) == doctest::Approx(std::sqrt(num / den)).epsilon(1e-12));
  CHECK(output_deviation(w, w, x) == 0.0);
  CHECK(output_deviation(w, Tensor(Shape{6, 5}), x) == doctest::Approx(1.0));
}

TEST_CASE("predictor recovers a linear labelling") {
  Rng rng(21);
  const auto train = labelled(200, rng);
  const auto test = labelled(100, rng);
  const std::vector<Head> heads{{Family::TT, 0.5}};
  TrainOptions opt;
  opt.seed = 4;
  const Predictor p = train_predictor(train, heads, opt);
  CHECK(p.final_mse <= p.initial_mse);
  CHECK(p.final_mse <= 0.9 * p.initial_mse);
  const double test_mse = head_mse(p, test);
  CHECK(test_mse <= 1e-3);

  // Shuffled pairing learns nothing that transfers.
  auto shuffled = train;
  std::vector<std::size_t> perm(shuffled.size());
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  for (std::size_t i = 0; i < perm.size(); ++i) shuffled[i].targets = train[perm[i]].targets;
  const Predictor q = train_predictor(shuffled, heads, opt);
  CHECK(head_mse(q, test) >= test_mse);

  const Predictor again = train_predictor(train, heads, opt);
  CHECK(again.w1 == p.w1);
  CHECK(again.head_w == p.head_w);
}

TEST_CASE("constant labels give a constant predictor") {
  Rng rng(22);
  std::vector<TrainingExample> ex(40);
  for (auto& e : ex) {
    e.features = random_features(rng);
    e.targets = {0.125};
    e.score_target = 0.5;
  }
  const Predictor p = train_predictor(ex, {{Family::Tucker, 0.25}}, {});
  CHECK_FALSE(p.log.empty());
  for (int i = 0; i < 50; ++i) {
    const auto out = forward(p, random_features(rng));
    CHECK(out.heads[0] == doctest::Approx(0.125).epsilon(1e-12));
    CHECK(out.score == doctest::Approx(0.5).epsilon(1e-12));
  }
  CHECK(head_mse(p, ex) <= 1e-20);
}

TEST_CASE("training needs enough labelled records") {
  Rng rng(23);
  CHECK_THROWS_AS(train_predictor(labelled(10, rng), {{Family::TT, 0.5}}, {}), InvalidArgument);
}

TEST_CASE("score head stays in the unit interval") {
  Rng rng(24);
  auto ex = labelled(64, rng);
  for (std::size_t i = 0; i < ex.size(); ++i) ex[i].score_target = double(i % 7) / 6.0;
  const Predictor p = train_predictor(ex, {{Family::TT, 0.5}}, {});
  for (int i = 0; i < 1000; ++i) {
    FeatureVector f = random_features(rng);
    for (double& v : f.values) v *= 1.0 + 100.0 * rng.uniform();
    const auto rec = predict(p, f, i, 0.02);
    CHECK(rec.score >= 0.0);
    CHECK(rec.score <= 1.0);
  }
}

TEST_CASE("recommendation picks the smallest ratio under the cap") {
  const std::vector<HeadPrediction> table{{Family::TT, 0.5, 0.01, {}},
                                          {Family::TT, 0.25, 0.015, {}},
                                          {Family::TT, 0.15, 0.05, {}},
                                          {Family::Tucker, 0.5, 0.03, {}},
                                          {Family::Tucker, 0.25, 0.5, 0.01}};
  const auto recs = recommend(table, 0.02);
  REQUIRE(recs.size() == 2);
  for (const auto& r : recs) {
    if (r.family == Family::TT) {
      CHECK_FALSE(r.keep_dense);
      CHECK(r.ratio == 0.25);
      CHECK(r.predicted_degradation == 0.015);
    } else {
      // Measured values take precedence over predictions.
      CHECK_FALSE(r.keep_dense);
      CHECK(r.ratio == 0.25);
    }
  }
  const std::vector<HeadPrediction> hot{{Family::TR, 0.5, 0.3, {}}, {Family::TR, 0.25, 0.4, {}}};
  const auto fallback = recommend(hot, 0.02);
  REQUIRE(fallback.size() == 1);
  CHECK(fallback[0].keep_dense);
}

TEST_CASE("recommendations agree with probe ground truth on training patches") {
  SynthOptions so;
  so.layers = 6;
  so.fragile_layers = {0, 5};
  const ModelContainer model = synthesize_model(so);
  AnalyzeOptions opt;
  opt.seed = 3;
  const Analysis a = analyze_model(model, opt);
  std::size_t agree = 0, total = 0;
  for (const auto& pa : a.patches) {
    CHECK(pa.record.score >= 0.0);
    CHECK(pa.record.score <= 1.0);
    if (!pa.probed) continue;
    std::vector<HeadPrediction> truth;
    for (const auto& r : pa.probes) truth.push_back({r.family, r.target_ratio, r.measured_degradation, {}});
    const auto want = recommend(truth, opt.degradation_cap);
    const auto got = predict(a.predictor, pa.features, pa.patch.id, opt.degradation_cap).recommendations;
    for (const auto& w : want) {
      for (const auto& g : got) {
        if (g.family != w.family) continue;
        ++total;
        agree += g.keep_dense == w.keep_dense && (w.keep_dense || g.ratio == w.ratio);
      }
    }
  }
  REQUIRE(total > 0);
  MESSAGE("agreement " << agree << "/" << total);
  CHECK(double(agree) >= 0.8 * double(total));
}
