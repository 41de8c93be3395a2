#pragma once

// Scoring for the detector and the classifiers, the detection benchmark and
// grid search, the end-to-end pipeline, and CSV/text reports.

#include "audio_io.hpp"
#include "classify.hpp"
#include "detect.hpp"
#include "error.hpp"
#include "features.hpp"
#include "filter.hpp"
#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace ttsound {

// ---------------------------------------------------------------------------
// Detection scoring

inline constexpr double kMatchToleranceMs = 5.0;

struct DetectionScore
{
  std::size_t matched{0}, missed{0}, spurious{0};
  double precision{1.0};
  double recall{1.0};
  bool precisionUndefined{false}; // no predictions: precision reported as 1
  bool recallUndefined{false};    // no truth events: recall reported as 1
  std::vector<double> onsetErrorsMs; // predicted - truth, per match
  double meanAbsErrorMs{0.0};
  double medianAbsErrorMs{0.0};

  double f1() const
  {
    return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }

  /// Recomputes the derived fields from counts and errors.
  void finalize()
  {
    const std::size_t predicted = matched + spurious, truth = matched + missed;
    precisionUndefined = predicted == 0;
    recallUndefined = truth == 0;
    precision = predicted == 0 ? 1.0 : static_cast<double>(matched) / static_cast<double>(predicted);
    recall = truth == 0 ? 1.0 : static_cast<double>(matched) / static_cast<double>(truth);
    std::vector<double> abs;
    for (double e : onsetErrorsMs) abs.push_back(std::abs(e));
    meanAbsErrorMs = 0.0;
    medianAbsErrorMs = 0.0;
    if (abs.empty()) return;
    for (double a : abs) meanAbsErrorMs += a;
    meanAbsErrorMs /= static_cast<double>(abs.size());
    std::sort(abs.begin(), abs.end());
    const std::size_t m = abs.size() / 2;
    medianAbsErrorMs = abs.size() % 2 ? abs[m] : 0.5 * (abs[m - 1] + abs[m]);
  }

  /// Pools counts and errors of another score into this one.
  void add(const DetectionScore& o)
  {
    matched += o.matched;
    missed += o.missed;
    spurious += o.spurious;
    onsetErrorsMs.insert(onsetErrorsMs.end(), o.onsetErrorsMs.begin(), o.onsetErrorsMs.end());
    finalize();
  }
};

/// Greedy one-to-one matching in time order: each truth onset takes the
/// nearest still-unmatched prediction within the tolerance (earlier one on a
/// tie). Both lists are in ms and sorted ascending.
inline DetectionScore match_events(std::span<const double> predictedMs, std::span<const double> truthMs,
                                   double toleranceMs = kMatchToleranceMs)
{
  if (!(toleranceMs >= 0.0)) throw ParameterError("tolerance_ms must be >= 0");
  DetectionScore s;
  std::vector<bool> used(predictedMs.size(), false);
  for (double t : truthMs)
  {
    std::optional<std::size_t> best;
    double bestDist = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < predictedMs.size(); ++j)
    {
      if (used[j]) continue;
      const double d = std::abs(predictedMs[j] - t);
      if (d <= toleranceMs && d < bestDist)
      {
        bestDist = d;
        best = j;
      }
    }
    if (best)
    {
      used[*best] = true;
      ++s.matched;
      s.onsetErrorsMs.push_back(predictedMs[*best] - t);
    }
    else
    {
      ++s.missed;
    }
  }
  s.spurious = predictedMs.size() - s.matched;
  s.finalize();
  return s;
}

inline std::vector<double> samples_to_ms(std::span<const std::size_t> samples, int sampleRate)
{
  std::vector<double> out;
  for (auto s : samples) out.push_back(1000.0 * static_cast<double>(s) / sampleRate);
  return out;
}

inline std::vector<double> events_to_ms(std::span<const BounceEvent> events, int sampleRate)
{
  std::vector<double> out;
  for (const auto& e : events) out.push_back(1000.0 * static_cast<double>(e.onsetSample) / sampleRate);
  return out;
}

// ---------------------------------------------------------------------------
// Detection benchmark

struct NoiseOverlay
{
  AudioClip noise;
  double snrDb{10.0};
};

/// Detects on every fixture (optionally overlaid with noise at the given SNR)
/// and pools the per-fixture matchings in fixture order.
inline DetectionScore run_detection_benchmark(std::span<const synth::Fixture> fixtures,
                                              const DetectorConfig& config, const FilterSpec& filter,
                                              const std::optional<NoiseOverlay>& noise = std::nullopt,
                                              double toleranceMs = kMatchToleranceMs)
{
  DetectionScore total;
  total.finalize();
  for (const auto& f : fixtures)
  {
    const AudioClip clip = noise ? mix_noise(f.clip, noise->noise, noise->snrDb).clip : f.clip;
    const auto events = detect_bounces(clip, config, filter);
    total.add(match_events(events_to_ms(events, clip.sample_rate()),
                           samples_to_ms(f.onsets, clip.sample_rate()), toleranceMs));
  }
  return total;
}

struct GridRow
{
  double gamma{0.0};
  double multiplier{0.0};
  DetectionScore score;
};

struct GridResult
{
  std::vector<GridRow> rows; // gamma-major order
  std::size_t best{0};
  DetectorConfig bestConfig;
};

/// Exhaustive search; best = highest F1, then lower mean |onset error|, then
/// the first row in grid order.
inline GridResult grid_search_detector(std::span<const synth::Fixture> fixtures,
                                       std::span<const double> gammas,
                                       std::span<const double> multipliers,
                                       const DetectorConfig& base, const FilterSpec& filter,
                                       const std::optional<NoiseOverlay>& noise = std::nullopt)
{
  if (gammas.empty() || multipliers.empty()) throw ParameterError("grid search needs nonempty grids");
  GridResult r;
  for (double g : gammas)
    for (double m : multipliers)
    {
      DetectorConfig c = base;
      c.gamma = g;
      c.thresholdMultiplier = m;
      r.rows.push_back({g, m, run_detection_benchmark(fixtures, c, filter, noise)});
    }
  for (std::size_t i = 1; i < r.rows.size(); ++i)
  {
    const auto& a = r.rows[i].score;
    const auto& b = r.rows[r.best].score;
    if (a.f1() > b.f1() || (a.f1() == b.f1() && a.meanAbsErrorMs < b.meanAbsErrorMs)) r.best = i;
  }
  r.bestConfig = base;
  r.bestConfig.gamma = r.rows[r.best].gamma;
  r.bestConfig.thresholdMultiplier = r.rows[r.best].multiplier;
  return r;
}

// ---------------------------------------------------------------------------
// Classification scoring

struct ClassificationScore
{
  std::vector<std::string> classes;
  std::vector<std::vector<std::size_t>> confusion; // [truth][predicted]
  std::vector<double> precision, recall, f1;
  std::vector<std::size_t> support;
  double macroPrecision{0.0}, macroRecall{0.0}, macroF1{0.0};
  double microPrecision{0.0}, microRecall{0.0}, microF1{0.0};
  double accuracy{0.0};
  std::size_t total{0};
};

/// Class indices in [0, names.size()). A class never predicted has precision
/// 0; a class absent from the truth has recall 0.
inline ClassificationScore score_predictions(std::span<const std::size_t> truth,
                                             std::span<const std::size_t> predicted,
                                             std::vector<std::string> names)
{
  if (truth.size() != predicted.size()) throw ShapeError("truth and predictions differ in length");
  if (truth.empty()) throw DataError("cannot score an empty test set");
  const std::size_t n = names.size();
  ClassificationScore s;
  s.classes = std::move(names);
  s.confusion.assign(n, std::vector<std::size_t>(n, 0));
  for (std::size_t i = 0; i < truth.size(); ++i)
  {
    if (truth[i] >= n || predicted[i] >= n) throw ParameterError("class index out of range");
    ++s.confusion[truth[i]][predicted[i]];
  }
  s.total = truth.size();
  std::size_t correct = 0;
  for (std::size_t c = 0; c < n; ++c)
  {
    std::size_t rowSum = 0, colSum = 0;
    for (std::size_t k = 0; k < n; ++k)
    {
      rowSum += s.confusion[c][k];
      colSum += s.confusion[k][c];
    }
    const double tp = static_cast<double>(s.confusion[c][c]);
    correct += s.confusion[c][c];
    const double p = colSum ? tp / static_cast<double>(colSum) : 0.0;
    const double r = rowSum ? tp / static_cast<double>(rowSum) : 0.0;
    s.precision.push_back(p);
    s.recall.push_back(r);
    s.f1.push_back(p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0);
    s.support.push_back(rowSum);
  }
  const double dn = static_cast<double>(n);
  for (std::size_t c = 0; c < n; ++c)
  {
    s.macroPrecision += s.precision[c] / dn;
    s.macroRecall += s.recall[c] / dn;
    s.macroF1 += s.f1[c] / dn;
  }
  s.accuracy = static_cast<double>(correct) / static_cast<double>(s.total);
  // Single-label: every error is one false positive and one false negative.
  s.microPrecision = s.microRecall = s.microF1 = s.accuracy;
  return s;
}

/// Predicts every record in `indices` and scores against the task labels.
inline ClassificationScore score_classifier(const ClassifierModel& model,
                                            std::span<const FeatureRecord> records,
                                            std::span<const std::size_t> indices)
{
  if (indices.empty()) throw DataError("cannot score an empty test set");
  std::vector<Matrix> mels;
  std::vector<std::size_t> truth;
  for (auto i : indices)
  {
    const auto& r = records[i];
    if (!eligible(r, model.classes.task))
      throw DataError("record " + std::to_string(i) + " has no " +
                      std::string(to_string(model.classes.task)) + " label");
    const auto c = model.classes.index_of(task_label(r, model.classes.task));
    if (!c)
      throw DataError("record " + std::to_string(i) + " has class '" +
                      label_name(model.classes.task, task_label(r, model.classes.task)) +
                      "' unknown to the model");
    truth.push_back(*c);
    mels.push_back(r.logMel);
  }
  std::vector<std::size_t> predicted;
  for (const auto& p : predict_all(model, mels)) predicted.push_back(p.index);
  return score_predictions(truth, predicted, model.classes.names());
}

// ---------------------------------------------------------------------------
// End to end

struct AnnotatedEvent
{
  std::size_t onsetSample{0};
  double onsetS{0.0};
  int surface{0};
  std::vector<double> surfaceScores;
  std::optional<int> spin;
  std::vector<double> spinScores;
};

/// detect -> window -> log-mel -> surface; spin only when the predicted
/// surface is a racket and a spin model is given.
inline std::vector<AnnotatedEvent> end_to_end(const AudioClip& recording, const DetectorConfig& config,
                                              const FilterSpec& filter, const ClassifierModel& surfaceModel,
                                              const ClassifierModel* spinModel = nullptr)
{
  if (recording.sample_rate() != kDatasetSampleRate)
    throw ParameterError("recordings must be sampled at 44100 Hz, got " +
                         std::to_string(recording.sample_rate()));
  if (surfaceModel.classes.task != Task::Surface) throw ParameterError("surface model is not a surface classifier");
  if (spinModel && spinModel->classes.task != Task::Spin) throw ParameterError("spin model is not a spin classifier");
  MelExtractor ex;
  std::vector<AnnotatedEvent> out;
  for (const auto& ev : detect_bounces(recording, config, filter))
  {
    const auto mel = ex.log_mel(extract_window(recording, ev));
    AnnotatedEvent a;
    a.onsetSample = ev.onsetSample;
    a.onsetS = ev.onsetS;
    auto ps = predict_window(surfaceModel, mel);
    a.surface = ps.label;
    a.surfaceScores = std::move(ps.scores);
    if (spinModel && a.surface < kNumRackets)
    {
      auto pp = predict_window(*spinModel, mel);
      a.spin = pp.label;
      a.spinScores = std::move(pp.scores);
    }
    out.push_back(std::move(a));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

namespace detail {

inline std::string fmt(double v, int digits = 6)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

} // namespace detail

inline std::string detection_score_csv(const DetectionScore& s)
{
  std::ostringstream o;
  o << "precision,recall,f1,matched,missed,spurious,mean_abs_onset_error_ms,median_abs_onset_error_ms,"
       "precision_undefined\n";
  o << detail::fmt(s.precision) << ',' << detail::fmt(s.recall) << ',' << detail::fmt(s.f1()) << ','
    << s.matched << ',' << s.missed << ',' << s.spurious << ',' << detail::fmt(s.meanAbsErrorMs) << ','
    << detail::fmt(s.medianAbsErrorMs) << ',' << (s.precisionUndefined ? 1 : 0) << '\n';
  return o.str();
}

inline std::string detection_report(const DetectionScore& s, const std::string& title)
{
  std::ostringstream o;
  o << title << '\n';
  o << "  precision  " << detail::fmt(s.precision, 4) << (s.precisionUndefined ? "  (no detections)" : "")
    << '\n';
  o << "  recall     " << detail::fmt(s.recall, 4) << '\n';
  o << "  f1         " << detail::fmt(s.f1(), 4) << '\n';
  o << "  matched " << s.matched << ", missed " << s.missed << ", spurious " << s.spurious << '\n';
  o << "  |onset error| mean " << detail::fmt(s.meanAbsErrorMs, 4) << " ms, median "
    << detail::fmt(s.medianAbsErrorMs, 4) << " ms\n";
  return o.str();
}

inline std::string grid_csv(const GridResult& g)
{
  std::ostringstream o;
  o << "gamma,threshold_multiplier,precision,recall,f1,mean_abs_onset_error_ms,best\n";
  for (std::size_t i = 0; i < g.rows.size(); ++i)
  {
    const auto& r = g.rows[i];
    o << detail::fmt(r.gamma, 6) << ',' << detail::fmt(r.multiplier, 6) << ',' << detail::fmt(r.score.precision)
      << ',' << detail::fmt(r.score.recall) << ',' << detail::fmt(r.score.f1()) << ','
      << detail::fmt(r.score.meanAbsErrorMs) << ',' << (i == g.best ? 1 : 0) << '\n';
  }
  return o.str();
}

/// Header row and first column hold class names; rows are truth.
inline std::string confusion_csv(const ClassificationScore& s)
{
  std::ostringstream o;
  o << "truth\\predicted";
  for (const auto& c : s.classes) o << ',' << c;
  o << '\n';
  for (std::size_t r = 0; r < s.classes.size(); ++r)
  {
    o << s.classes[r];
    for (auto v : s.confusion[r]) o << ',' << v;
    o << '\n';
  }
  return o.str();
}

inline std::string classification_csv(const ClassificationScore& s)
{
  std::ostringstream o;
  o << "class,precision,recall,f1,support\n";
  for (std::size_t c = 0; c < s.classes.size(); ++c)
    o << s.classes[c] << ',' << detail::fmt(s.precision[c]) << ',' << detail::fmt(s.recall[c]) << ','
      << detail::fmt(s.f1[c]) << ',' << s.support[c] << '\n';
  o << "macro," << detail::fmt(s.macroPrecision) << ',' << detail::fmt(s.macroRecall) << ','
    << detail::fmt(s.macroF1) << ',' << s.total << '\n';
  o << "micro," << detail::fmt(s.microPrecision) << ',' << detail::fmt(s.microRecall) << ','
    << detail::fmt(s.microF1) << ',' << s.total << '\n';
  return o.str();
}

inline std::string classification_report(const ClassificationScore& s)
{
  std::size_t width = 5;
  for (const auto& c : s.classes) width = std::max(width, c.size());
  auto pad = [&](const std::string& t) { return t + std::string(width - t.size() + 2, ' '); };
  std::ostringstream o;
  o << pad("class") << "precision  recall  f1     support\n";
  for (std::size_t c = 0; c < s.classes.size(); ++c)
    o << pad(s.classes[c]) << detail::fmt(s.precision[c], 2) << "       " << detail::fmt(s.recall[c], 2)
      << "    " << detail::fmt(s.f1[c], 2) << "   " << s.support[c] << '\n';
  o << pad("macro") << detail::fmt(s.macroPrecision, 2) << "       " << detail::fmt(s.macroRecall, 2) << "    "
    << detail::fmt(s.macroF1, 2) << "   " << s.total << '\n';
  o << pad("micro") << detail::fmt(s.microPrecision, 2) << "       " << detail::fmt(s.microRecall, 2) << "    "
    << detail::fmt(s.microF1, 2) << "   " << s.total << '\n';
  o << "accuracy " << detail::fmt(s.accuracy, 4) << '\n';
  return o.str();
}

inline std::string events_csv(std::span<const BounceEvent> events)
{
  std::ostringstream o;
  o << "onset_sample,onset_s,peak_energy,ema_at_onset\n";
  for (const auto& e : events)
  {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.9g,%.9g\n", e.onsetSample, e.onsetS, e.peakEnergy, e.emaAtOnset);
    o << buf;
  }
  return o.str();
}

inline std::string annotated_csv(std::span<const AnnotatedEvent> events)
{
  std::ostringstream o;
  o << "onset_sample,onset_s,surface,surface_score,spin,spin_score\n";
  for (const auto& e : events)
  {
    const auto top = [](const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); };
    o << e.onsetSample << ',' << detail::fmt(e.onsetS) << ',' << label_name(Task::Surface, e.surface) << ','
      << detail::fmt(top(e.surfaceScores)) << ',';
    if (e.spin) o << label_name(Task::Spin, *e.spin) << ',' << detail::fmt(top(e.spinScores));
    else o << ',';
    o << '\n';
  }
  return o.str();
}

} // namespace ttsound
