#include "fixtures.hpp"

#include <ttsound/eval.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace ttsound;

// ---------------------------------------------------------------------------
// match_events

TEST(MatchEvents, IdenticalListsArePerfect)
{
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 10000.0);
  for (int trial = 0; trial < 20; ++trial)
  {
    std::vector<double> a(static_cast<std::size_t>(trial));
    for (auto& v : a) v = u(rng);
    std::sort(a.begin(), a.end());
    const auto s = match_events(a, a);
    EXPECT_EQ(s.matched, a.size());
    EXPECT_EQ(s.precision, 1.0);
    EXPECT_EQ(s.recall, 1.0);
    for (double e : s.onsetErrorsMs) EXPECT_EQ(e, 0.0);
  }
}

TEST(MatchEvents, EmptyPredictionsFlagPrecision)
{
  const std::vector<double> truth{10.0, 50.0};
  const auto s = match_events({}, truth);
  EXPECT_EQ(s.precision, 1.0);
  EXPECT_TRUE(s.precisionUndefined);
  EXPECT_EQ(s.matched, 0u);
  EXPECT_EQ(s.recall, 0.0);
  EXPECT_EQ(s.missed, 2u);
}

TEST(MatchEvents, HandEnumeratedGreedyMatch)
{
  const std::vector<double> truth{100.0}, pred{100.2, 140.0};
  const auto s = match_events(pred, truth);
  EXPECT_EQ(s.matched, 1u);
  EXPECT_EQ(s.spurious, 1u);
  EXPECT_EQ(s.missed, 0u);
  EXPECT_DOUBLE_EQ(s.precision, 0.5);
  EXPECT_DOUBLE_EQ(s.recall, 1.0);
  ASSERT_EQ(s.onsetErrorsMs.size(), 1u);
  EXPECT_NEAR(s.onsetErrorsMs[0], 0.2, 1e-12);
}

TEST(MatchEvents, NearestUnmatchedPredictionWins)
{
  // Truth 10 takes 11 (nearest); truth 12 then takes 14, not the used 11.
  const std::vector<double> truth{10.0, 12.0}, pred{8.0, 11.0, 14.0};
  const auto s = match_events(pred, truth);
  EXPECT_EQ(s.matched, 2u);
  EXPECT_EQ(s.onsetErrorsMs, (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(s.spurious, 1u);
}

TEST(MatchEvents, ToleranceMonotonicity)
{
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1000.0);
  for (int trial = 0; trial < 50; ++trial)
  {
    std::vector<double> t(20), p(25);
    for (auto& v : t) v = u(rng);
    for (auto& v : p) v = u(rng);
    std::sort(t.begin(), t.end());
    std::sort(p.begin(), p.end());
    std::size_t last = 0;
    for (double tol : {0.0, 1.0, 2.5, 5.0, 10.0, 20.0, 50.0, 1000.0})
    {
      const auto s = match_events(p, t, tol);
      EXPECT_GE(s.matched, last) << "tolerance " << tol;
      EXPECT_EQ(s.matched + s.missed, t.size());
      EXPECT_EQ(s.matched + s.spurious, p.size());
      last = s.matched;
    }
  }
}

TEST(MatchEvents, MeanAndMedianAbsoluteError)
{
  const std::vector<double> truth{0.0, 100.0, 200.0, 300.0}, pred{1.0, 98.0, 200.5, 304.0};
  const auto s = match_events(pred, truth);
  EXPECT_NEAR(s.meanAbsErrorMs, (1.0 + 2.0 + 0.5 + 4.0) / 4.0, 1e-12);
  EXPECT_NEAR(s.medianAbsErrorMs, 1.5, 1e-12);
  EXPECT_THROW(match_events(pred, truth, -1.0), ParameterError);
}

// ---------------------------------------------------------------------------
// Classification metrics

TEST(ScorePredictions, PerfectClassifier)
{
  std::vector<std::size_t> t{0, 1, 2, 2, 1, 0, 0};
  const auto s = score_predictions(t, t, {"a", "b", "c"});
  for (std::size_t c = 0; c < 3; ++c)
  {
    EXPECT_EQ(s.f1[c], 1.0);
    for (std::size_t k = 0; k < 3; ++k)
    {
      if (k != c) { EXPECT_EQ(s.confusion[c][k], 0u); }
    }
  }
  EXPECT_EQ(s.macroF1, 1.0);
  EXPECT_EQ(s.microF1, 1.0);
}

TEST(ScorePredictions, ConstantClassifierClosedForm)
{
  std::vector<std::size_t> t, p;
  for (int i = 0; i < 30; ++i)
  {
    t.push_back(static_cast<std::size_t>(i % 3));
    p.push_back(0);
  }
  const auto s = score_predictions(t, p, {"a", "b", "c"});
  EXPECT_NEAR(s.accuracy, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.macroF1, 1.0 / 6.0, 1e-12);
  EXPECT_NEAR(s.f1[0], 0.5, 1e-12);
}

TEST(ScorePredictions, MetricIdentitiesOnRandomConfusions)
{
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> cls(0, 4);
  for (int trial = 0; trial < 100; ++trial)
  {
    std::vector<std::size_t> t, p;
    for (int i = 0; i < 60; ++i)
    {
      t.push_back(cls(rng));
      p.push_back(cls(rng) < 2 ? t.back() : cls(rng));
    }
    const auto s = score_predictions(t, p, {"a", "b", "c", "d", "e"});
    std::vector<std::size_t> counts(5, 0);
    for (auto c : t) ++counts[c];
    for (std::size_t c = 0; c < 5; ++c)
    {
      std::size_t row = 0;
      for (auto v : s.confusion[c]) row += v;
      EXPECT_EQ(row, counts[c]);
      EXPECT_EQ(s.support[c], counts[c]);
    }
    EXPECT_EQ(s.microF1, s.accuracy);
    EXPECT_EQ(s.microPrecision, s.microRecall);
    EXPECT_LE(s.macroF1, *std::max_element(s.f1.begin(), s.f1.end()) + 1e-12);
    EXPECT_GE(s.macroF1, *std::min_element(s.f1.begin(), s.f1.end()) - 1e-12);
  }
}

TEST(ScorePredictions, EmptyTestSetIsDataError)
{
  EXPECT_THROW(score_predictions({}, {}, {"a"}), DataError);
}

TEST(ScoreClassifier, ScoresModelOnHeldOutSplit)
{
  const auto recs = fixtures::two_band_records(60, 4);
  TrainOptions opt;
  opt.method = ModelKind::Svm;
  const auto out = train_classifier(recs, opt);
  const auto s = score_classifier(out.model, recs, out.split.test);
  EXPECT_EQ(s.total, out.split.test.size());
  EXPECT_GE(s.macroF1, 0.98);
  EXPECT_THROW(score_classifier(out.model, recs, std::vector<std::size_t>{}), DataError);

  auto foreign = recs;
  foreign[0].surface = id(SurfaceClass::Floor);
  EXPECT_THROW(score_classifier(out.model, foreign, std::vector<std::size_t>{0}), DataError);

  const auto csv = confusion_csv(s);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "truth\\predicted,racket_01,table");
  const auto report = classification_report(s);
  EXPECT_NE(report.find("macro"), std::string::npos);
  EXPECT_NE(report.find("micro"), std::string::npos);
}

// ---------------------------------------------------------------------------
// Detection benchmark and grid search

TEST(DetectionBenchmark, CleanFixtures)
{
  const auto fx = synth::click_fixtures(50, 1);
  const auto s = run_detection_benchmark(fx, {}, {});
  EXPECT_GE(s.precision, 0.98);
  EXPECT_GE(s.recall, 0.98);
  EXPECT_LE(s.meanAbsErrorMs, 0.5);
}

TEST(DetectionBenchmark, SpeechNoiseAt10dB)
{
  const auto fx = synth::click_fixtures(50, 1);
  const auto s = run_detection_benchmark(fx, {}, {}, NoiseOverlay{synth::speech_noise(44100, 7), 10.0});
  EXPECT_GE(s.precision, 0.95);
  EXPECT_GE(s.recall, 0.90);
  EXPECT_LE(s.meanAbsErrorMs, 1.0);
}

TEST(DetectionBenchmark, NoFixturesGivesEmptyScore)
{
  const auto s = run_detection_benchmark({}, {}, {});
  EXPECT_EQ(s.matched + s.missed + s.spurious, 0u);
  EXPECT_TRUE(s.onsetErrorsMs.empty());
}

TEST(GridSearch, SingletonGridReturnsThatConfig)
{
  const auto fx = synth::click_fixtures(5, 2);
  const std::vector<double> g{0.99}, m{6.0};
  const auto r = grid_search_detector(fx, g, m, {}, {});
  EXPECT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.bestConfig.gamma, 0.99);
  EXPECT_EQ(r.bestConfig.thresholdMultiplier, 6.0);
  EXPECT_THROW(grid_search_detector(fx, std::vector<double>{}, m, {}, {}), ParameterError);
}

TEST(GridSearch, TableSizeAndDominatedConfig)
{
  const auto fx = synth::click_fixtures(10, 3);
  const std::vector<double> g{0.98, 0.995, 0.999}, m{4.0, 8.0, 16.0};
  const auto r = grid_search_detector(fx, g, m, {}, {});
  EXPECT_EQ(r.rows.size(), g.size() * m.size());

  // A multiplier 10x above any event's energy ratio (at every gamma in the
  // grid) detects nothing.
  double maxRatio = 0.0;
  for (double gamma : g)
    for (const auto& f : fx)
    {
      DetectorConfig probe;
      probe.gamma = gamma;
      probe.thresholdMultiplier = 1.0001;
      for (const auto& e : detect_bounces(f.clip, probe, {}))
        maxRatio = std::max(maxRatio, e.peakEnergy / e.emaAtOnset);
    }
  auto m2 = m;
  m2.push_back(10.0 * maxRatio);
  const auto r2 = grid_search_detector(fx, g, m2, {}, {});
  EXPECT_EQ(r2.bestConfig.gamma, r.bestConfig.gamma);
  EXPECT_EQ(r2.bestConfig.thresholdMultiplier, r.bestConfig.thresholdMultiplier);
  for (const auto& row : r2.rows)
  {
    if (row.multiplier == m2.back()) { EXPECT_EQ(row.score.matched + row.score.spurious, 0u); }
  }
}

// ---------------------------------------------------------------------------
// End to end

namespace {

struct PipelineModels
{
  ClassifierModel surface, spin;
  std::vector<FeatureRecord> heldOut;
  std::vector<std::vector<double>> heldOutWindows;
};

/// Racket back/top spin and table, all with energy above the detector's
/// high-pass so spliced windows trigger it.
PipelineModels pipeline_models()
{
  const std::vector<fixtures::BandClass> classes{
      {id(SurfaceClass::Racket01), id(SpinClass::Back), 11500.0},
      {id(SurfaceClass::Racket01), id(SpinClass::Top), 13500.0},
      {id(SurfaceClass::Table), -1, 17000.0}};
  PipelineModels p;
  auto recs = fixtures::band_records(classes, 60, 5);
  TrainOptions opt;
  opt.method = ModelKind::Svm;
  p.surface = train_classifier(recs, opt).model;
  opt.task = Task::Spin;
  p.spin = train_classifier(recs, opt).model;

  std::mt19937_64 rng(77);
  for (const auto& c : classes)
  {
    p.heldOutWindows.push_back(synth::band_window(c.centerHz, rng));
    FeatureRecord r;
    r.surface = static_cast<std::int8_t>(c.surface);
    r.spin = static_cast<std::int8_t>(c.spin);
    p.heldOut.push_back(r);
  }
  return p;
}

} // namespace

TEST(EndToEnd, SilenceGivesNoEvents)
{
  const auto p = pipeline_models();
  const AudioClip silence(std::vector<double>(44100, 0.0), 44100);
  EXPECT_TRUE(end_to_end(silence, {}, {}, p.surface, &p.spin).empty());
  EXPECT_THROW(end_to_end(AudioClip(std::vector<double>(480, 0.0), 48000), {}, {}, p.surface), ParameterError);
  EXPECT_THROW(end_to_end(silence, {}, {}, p.spin), ParameterError);
}

TEST(EndToEnd, SplicedWindowIsDetectedAndLabeled)
{
  const auto p = pipeline_models();
  for (std::size_t k = 0; k < p.heldOut.size(); ++k)
  {
    std::vector<double> x(44100, 0.0);
    const std::size_t at = 20000;
    std::copy(p.heldOutWindows[k].begin(), p.heldOutWindows[k].end(), x.begin() + at);
    const auto events = end_to_end(AudioClip(x, 44100), {}, {}, p.surface, &p.spin);
    ASSERT_EQ(events.size(), 1u) << "class " << k;
    EXPECT_NEAR(static_cast<double>(events[0].onsetSample), static_cast<double>(at), 44.1);
    EXPECT_EQ(events[0].surface, p.heldOut[k].surface);
    if (p.heldOut[k].spin >= 0)
    {
      ASSERT_TRUE(events[0].spin.has_value());
      EXPECT_EQ(*events[0].spin, p.heldOut[k].spin);
    }
    else
    {
      EXPECT_FALSE(events[0].spin.has_value());
    }
  }
}

TEST(EndToEnd, EventsStrictlyIncrease)
{
  const auto p = pipeline_models();
  const auto fx = synth::click_fixture(9, {.durationS = 2.0, .clicks = 6});
  const auto events = end_to_end(fx.clip, {}, {}, p.surface, &p.spin);
  ASSERT_EQ(events.size(), fx.onsets.size());
  for (std::size_t i = 1; i < events.size(); ++i) EXPECT_GT(events[i].onsetS, events[i - 1].onsetS);
  const auto csv = annotated_csv(events);
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), events.size() + 1);
}
