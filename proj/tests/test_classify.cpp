#include "fixtures.hpp"

#include <ttsound/classify.hpp>
#include <ttsound/gmm.hpp>
#include <ttsound/svm.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

using namespace ttsound;

namespace {

struct Labeled
{
  std::vector<std::vector<double>> x;
  std::vector<int> y;
};

/// Two 2-D boxes separated by a gap of 2 along the first axis.
Labeled separable_blobs(std::size_t perClass, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 2.0), v(-3.0, 3.0);
  Labeled d;
  for (std::size_t i = 0; i < perClass; ++i)
  {
    d.x.push_back({1.0 + u(rng), v(rng)});
    d.y.push_back(0);
    d.x.push_back({-1.0 - u(rng), v(rng)});
    d.y.push_back(1);
  }
  return d;
}

double accuracy(const SvmModel& m, const Labeled& d)
{
  std::size_t ok = 0;
  for (std::size_t i = 0; i < d.x.size(); ++i) ok += m.predict(d.x[i]) == static_cast<std::size_t>(d.y[i]);
  return static_cast<double>(ok) / static_cast<double>(d.x.size());
}

} // namespace

// ---------------------------------------------------------------------------
// SVM

TEST(Svm, SeparableBlobsTrainingAccuracyIsOne)
{
  auto d = separable_blobs(100, 1);
  auto m = svm_train(d.x, d.y, 2);
  EXPECT_EQ(accuracy(m, d), 1.0);
  for (const auto& w : m.weights)
    for (double v : w) EXPECT_TRUE(std::isfinite(v));
}

TEST(Svm, FlippedLabelsFlipEveryPrediction)
{
  auto d = separable_blobs(60, 2);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 2.0);
  for (auto& x : d.x) x[1] += g(rng); // overlap the classes a little
  auto flipped = d.y;
  for (auto& l : flipped) l = 1 - l;
  auto a = svm_train(d.x, d.y, 2);
  auto b = svm_train(d.x, flipped, 2);
  std::size_t agree = 0, total = 0;
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int i = 0; i < 500; ++i)
  {
    std::vector<double> x{u(rng), u(rng)};
    ++total;
    agree += b.predict(x) == 1 - a.predict(x);
  }
  for (const auto& x : d.x)
  {
    ++total;
    agree += b.predict(x) == 1 - a.predict(x);
  }
  EXPECT_EQ(agree, total);
}

// Pegasos converges as O(1/(lambda T)); at lambda 1e-4 and 50 epochs that
// needs a training set of dataset size (a few thousand windows).
TEST(Svm, ObjectiveBeatsZeroWeights)
{
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  Labeled d;
  for (int i = 0; i < 3000; ++i)
  {
    const int c = i % 3;
    d.x.push_back({g(rng) + c, g(rng) - c, g(rng)});
    d.y.push_back(c);
  }
  SvmConfig cfg;
  auto m = svm_train(d.x, d.y, 3, cfg);
  for (int c = 0; c < 3; ++c)
  {
    std::vector<int> y;
    for (int l : d.y) y.push_back(l == c ? 1 : -1);
    const std::vector<double> zero(3, 0.0);
    EXPECT_LE(svm_objective(m.weights[c], m.bias[c], d.x, y, cfg.lambda),
              svm_objective(zero, 0.0, d.x, y, cfg.lambda))
        << "class " << c;
  }
}

TEST(Svm, SingleClassIsDegenerate)
{
  std::vector<std::vector<double>> x{{1.0}, {2.0}};
  std::vector<int> y{1, 1};
  EXPECT_THROW(svm_train(x, y, 2), DegenerateError);
  SvmConfig bad;
  bad.lambda = 0.0;
  std::vector<int> y2{0, 1};
  EXPECT_THROW(svm_train(x, y2, 2, bad), ParameterError);
}

TEST(Svm, SeededAndDeterministic)
{
  auto d = separable_blobs(50, 5);
  auto a = svm_train(d.x, d.y, 2);
  auto b = svm_train(d.x, d.y, 2);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.bias, b.bias);
  EXPECT_THROW(a.scores(std::vector<double>{1.0}), ShapeError);
}

// ---------------------------------------------------------------------------
// GMM

TEST(Gmm, SingleComponentIsClosedForm)
{
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(3.0, 2.0);
  std::vector<std::vector<double>> x(257, std::vector<double>(4));
  for (auto& r : x)
    for (auto& v : r) v = g(rng);
  GmmConfig cfg;
  cfg.components = 1;
  std::mt19937_64 fitRng(0);
  auto fit = fit_diag_gmm(x, cfg, fitRng);
  for (std::size_t j = 0; j < 4; ++j)
  {
    double mean = 0.0, var = 0.0;
    for (const auto& r : x) mean += r[j];
    mean /= static_cast<double>(x.size());
    for (const auto& r : x) var += (r[j] - mean) * (r[j] - mean);
    var /= static_cast<double>(x.size());
    EXPECT_NEAR(fit.means[0][j], mean, 1e-12);
    EXPECT_NEAR(fit.vars[0][j], var, 1e-12);
  }
  EXPECT_DOUBLE_EQ(fit.weights[0], 1.0);
}

TEST(Gmm, EmLogLikelihoodIsMonotoneOnRandomData)
{
  for (std::uint64_t seed = 0; seed < 20; ++seed)
  {
    std::mt19937_64 rng(100 + seed);
    std::normal_distribution<double> g;
    std::uniform_int_distribution<int> nClusters(1, 5);
    std::vector<std::vector<double>> centers(static_cast<std::size_t>(nClusters(rng)), std::vector<double>(5));
    for (auto& c : centers)
      for (auto& v : c) v = 3.0 * g(rng);
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    for (int i = 0; i < 300; ++i)
    {
      const auto& c = centers[static_cast<std::size_t>(i) % centers.size()];
      std::vector<double> p(5);
      for (std::size_t j = 0; j < 5; ++j) p[j] = c[j] + g(rng) * (0.2 + 0.1 * static_cast<double>(j));
      x.push_back(p);
      y.push_back(i % 2);
    }
    GmmConfig cfg;
    cfg.seed = seed;
    std::vector<std::vector<double>> hist;
    gmm_train(x, y, 2, cfg, {}, &hist);
    ASSERT_EQ(hist.size(), 2u);
    for (const auto& h : hist)
    {
      ASSERT_FALSE(h.empty());
      for (std::size_t i = 1; i < h.size(); ++i)
        EXPECT_GE(h[i], h[i - 1] - 1e-9) << "seed " << seed << " iteration " << i;
    }
  }
}

TEST(Gmm, RecoversKnownTwoComponentMixture)
{
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  std::bernoulli_distribution pick(0.4);
  const std::vector<std::vector<double>> truth{{-3.0, 1.0, 0.5}, {4.0, -2.0, 2.5}};
  const std::vector<std::vector<double>> sd{{1.0, 0.5, 0.8}, {0.7, 1.2, 0.6}};
  std::vector<std::vector<double>> x;
  for (int i = 0; i < 5000; ++i)
  {
    const std::size_t k = pick(rng) ? 0 : 1;
    std::vector<double> p(3);
    for (std::size_t j = 0; j < 3; ++j) p[j] = truth[k][j] + sd[k][j] * g(rng);
    x.push_back(p);
  }
  GmmConfig cfg;
  cfg.components = 2;
  std::mt19937_64 fitRng(1);
  auto fit = fit_diag_gmm(x, cfg, fitRng);
  auto err = [&](std::size_t a, std::size_t b) {
    double e = 0.0;
    for (std::size_t j = 0; j < 3; ++j) e = std::max(e, std::abs(fit.means[a][j] - truth[b][j]));
    return e;
  };
  const double direct = std::max(err(0, 0), err(1, 1));
  const double swapped = std::max(err(0, 1), err(1, 0));
  EXPECT_LT(std::min(direct, swapped), 0.1);
}

TEST(Gmm, QuantizedModelKeepsInvariants)
{
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (int i = 0; i < 90; ++i)
  {
    x.push_back({g(rng) + i % 3, 1e-5 * g(rng), g(rng)});
    y.push_back(i % 3);
  }
  auto m = gmm_train(x, y, 3);
  double priorSum = 0.0;
  for (double p : m.priors) priorSum += p;
  EXPECT_EQ(priorSum, 1.0);
  for (const auto& c : m.classes)
  {
    double s = 0.0;
    for (double w : c.weights) s += w;
    EXPECT_NEAR(s, 1.0, 1e-9);
    for (const auto& row : c.vars)
      for (double v : row) EXPECT_GE(v, 1e-6);
  }
}

TEST(Gmm, SingleClassAlwaysPredicted)
{
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  std::vector<std::vector<double>> x;
  for (int i = 0; i < 40; ++i) x.push_back({g(rng), g(rng)});
  std::vector<int> y(40, 0);
  auto m = gmm_train(x, y, 1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(m.predict(std::vector<double>{50.0 * g(rng), g(rng)}), 0u);
}

TEST(Gmm, ExtremeScaleScoresStayFinite)
{
  std::mt19937_64 rng(10);
  std::normal_distribution<double> g;
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (int i = 0; i < 80; ++i)
  {
    x.push_back({g(rng) + 2.0 * (i % 2), g(rng)});
    y.push_back(i % 2);
  }
  auto m = gmm_train(x, y, 2);
  for (int i = 0; i < 50; ++i)
  {
    std::vector<double> p{1e3 * g(rng), 1e3 * g(rng)};
    for (double s : m.scores(p)) EXPECT_TRUE(std::isfinite(s));
  }
}

TEST(Gmm, TooFewSamplesNamesTheClass)
{
  std::vector<std::vector<double>> x(12, std::vector<double>{0.0});
  std::vector<int> y(12, 0);
  for (int i = 0; i < 3; ++i) y[static_cast<std::size_t>(i)] = 1;
  const std::vector<std::string> names{"table", "floor"};
  try
  {
    gmm_train(x, y, 2, {}, names);
    FAIL() << "expected DataError";
  }
  catch (const DataError& e)
  {
    EXPECT_NE(std::string(e.what()).find("floor"), std::string::npos);
  }
}

TEST(Gmm, LogSumExpIsStable)
{
  std::vector<double> v{-1e4, -1e4 + std::log(3.0)};
  EXPECT_NEAR(log_sum_exp(v), -1e4 + std::log(4.0), 1e-9);
  std::vector<double> big{1e300, 1e300};
  EXPECT_TRUE(std::isfinite(log_sum_exp(big)));
}

// ---------------------------------------------------------------------------
// Task labels, split and representations

namespace {

std::vector<FeatureRecord> labeled_records()
{
  std::vector<FeatureRecord> r;
  auto add = [&](int surface, int spin, int count) {
    for (int i = 0; i < count; ++i)
    {
      FeatureRecord f;
      f.surface = static_cast<std::int8_t>(surface);
      f.spin = static_cast<std::int8_t>(spin);
      f.logMel.data.assign(kMelCells, static_cast<double>(r.size()));
      r.push_back(f);
    }
  };
  add(0, 0, 20);
  add(0, 2, 13);
  add(3, 1, 7);
  add(10, -1, 25);
  add(12, -1, 1);
  add(11, 1, 9); // spin label on a non-racket surface is ignored for the spin task
  return r;
}

} // namespace

TEST(Split, StratifiedDisjointAndCovering)
{
  const auto recs = labeled_records();
  for (Task task : {Task::Surface, Task::Spin})
  {
    const auto s = stratified_split(recs, task, 42);
    std::set<std::size_t> train(s.train.begin(), s.train.end()), test(s.test.begin(), s.test.end());
    EXPECT_EQ(train.size(), s.train.size());
    for (auto i : test) EXPECT_EQ(train.count(i), 0u);
    std::set<std::size_t> all = train;
    all.insert(test.begin(), test.end());
    const auto elig = eligible_indices(recs, task);
    EXPECT_EQ(all, std::set<std::size_t>(elig.begin(), elig.end()));
  }
  // Per-stratum test sizes round(0.2 n), never emptying the training side.
  const auto s = stratified_split(recs, Task::Surface, 42);
  std::map<std::pair<int, int>, int> testCount;
  for (auto i : s.test) ++testCount[{recs[i].surface, recs[i].spin}];
  EXPECT_EQ((testCount[{0, 0}]), 4);
  EXPECT_EQ((testCount[{0, 2}]), 3);
  EXPECT_EQ((testCount[{3, 1}]), 1);
  EXPECT_EQ((testCount[{10, -1}]), 5);
  EXPECT_EQ((testCount[{12, -1}]), 0);
  EXPECT_EQ((testCount[{11, 1}]), 2);
}

TEST(Split, SeedDeterminesSplit)
{
  const auto recs = labeled_records();
  const auto a = stratified_split(recs, Task::Surface, 1);
  const auto b = stratified_split(recs, Task::Surface, 1);
  const auto c = stratified_split(recs, Task::Surface, 2);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(a.test, c.test);
  EXPECT_THROW(stratified_split(recs, Task::Surface, 1, 1.0), ParameterError);
}

TEST(Split, SpinUsesOnlyLabeledRackets)
{
  const auto recs = labeled_records();
  for (auto i : eligible_indices(recs, Task::Spin))
  {
    EXPECT_LT(recs[i].surface, kNumRackets);
    EXPECT_GE(recs[i].spin, 0);
  }
  EXPECT_EQ(eligible_indices(recs, Task::Spin).size(), 40u);
  const auto t = class_table(recs, Task::Spin);
  EXPECT_EQ(t.labels, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(t.names(), (std::vector<std::string>{"back", "flat", "top"}));
}

TEST(Train, SpinWithoutLabelsIsMissingLabels)
{
  const auto recs = fixtures::two_band_records(10, 1);
  TrainOptions opt;
  opt.task = Task::Spin;
  opt.method = ModelKind::Svm;
  EXPECT_THROW(train_classifier(recs, opt), MissingLabelsError);
  auto single = recs;
  for (auto& r : single) r.surface = 4;
  opt.task = Task::Surface;
  EXPECT_THROW(train_classifier(single, opt), DegenerateError);
}

TEST(Representation, ShapesPerMethod)
{
  std::mt19937_64 rng(1);
  const auto mel = fixtures::random_log_mel(rng);
  EXPECT_EQ(representation(ModelKind::Cnn, mel).rows, kMelBands);
  EXPECT_EQ(representation(ModelKind::Cnn, mel).cols, kMelFrames);
  EXPECT_EQ(representation(ModelKind::Svm, mel).cols, kMelCells);
  EXPECT_EQ(representation(ModelKind::Svm, mel).data, normalize_mel(mel).data);
  EXPECT_EQ(representation(ModelKind::Gmm, mel).cols, kMfccCoeffs);
}

TEST(Train, SvmAndGmmSeparateTwoBands)
{
  const auto recs = fixtures::two_band_records(100, 2);
  for (auto method : {ModelKind::Svm, ModelKind::Gmm})
  {
    TrainOptions opt;
    opt.method = method;
    opt.seed = 3;
    auto out = train_classifier(recs, opt);
    ASSERT_FALSE(out.split.test.empty());
    std::size_t ok = 0;
    for (auto i : out.split.test)
    {
      const auto p = predict_window(out.model, recs[i].logMel);
      ok += p.label == recs[i].surface;
    }
    const double acc = static_cast<double>(ok) / static_cast<double>(out.split.test.size());
    EXPECT_GE(acc, method == ModelKind::Svm ? 0.98 : 0.95) << to_string(method);
    EXPECT_EQ(out.model.meta.at("data_fnv1a"), fingerprint(recs));

    // Shape guard: handing one method's representation to another.
    const auto wrong = representation(method == ModelKind::Svm ? ModelKind::Gmm : ModelKind::Svm,
                                      recs[0].logMel);
    EXPECT_THROW(predict(out.model, wrong), ShapeError);
  }
}

TEST(Train, SameSeedSameModel)
{
  const auto recs = fixtures::two_band_records(40, 3);
  for (auto method : {ModelKind::Svm, ModelKind::Gmm})
  {
    TrainOptions opt;
    opt.method = method;
    opt.seed = 7;
    auto a = train_classifier(recs, opt);
    auto b = train_classifier(recs, opt);
    std::mt19937_64 rng(2);
    for (int i = 0; i < 20; ++i)
    {
      const auto mel = fixtures::random_log_mel(rng);
      EXPECT_EQ(predict_window(a.model, mel).scores, predict_window(b.model, mel).scores);
    }
  }
}
