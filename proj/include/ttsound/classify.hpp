#pragma once

// Surface and spin classifiers over feature records: class tables, the
// stratified split, per-method input representations, training and predict.

#include "cnn.hpp"
#include "error.hpp"
#include "features.hpp"
#include "gmm.hpp"
#include "labels.hpp"
#include "svm.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace ttsound {

enum class ModelKind : std::uint8_t { Cnn = 0, Svm = 1, Gmm = 2 };

inline std::string_view to_string(ModelKind k)
{
  switch (k)
  {
    case ModelKind::Cnn: return "cnn";
    case ModelKind::Svm: return "svm";
    case ModelKind::Gmm: return "gmm";
  }
  return "?";
}

inline std::optional<ModelKind> parse_method(std::string_view s)
{
  if (s == "cnn") return ModelKind::Cnn;
  if (s == "svm") return ModelKind::Svm;
  if (s == "gmm") return ModelKind::Gmm;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Labels per task

/// Surface: every record. Spin: racket records carrying a spin label.
inline bool eligible(const FeatureRecord& r, Task task)
{
  if (r.surface < 0 || r.surface >= kNumSurfaceClasses) return false;
  if (task == Task::Surface) return true;
  return r.surface < kNumRackets && r.spin >= 0 && r.spin < kNumSpinClasses;
}

inline int task_label(const FeatureRecord& r, Task task)
{
  return task == Task::Surface ? r.surface : r.spin;
}

inline std::vector<std::size_t> eligible_indices(std::span<const FeatureRecord> records, Task task)
{
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (eligible(records[i], task)) out.push_back(i);
  return out;
}

/// Label ids in class-index order, with their names.
struct ClassTable
{
  Task task{Task::Surface};
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::string name(std::size_t index) const { return label_name(task, labels.at(index)); }
  std::vector<std::string> names() const
  {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < labels.size(); ++i) out.push_back(name(i));
    return out;
  }
  std::optional<std::size_t> index_of(int label) const
  {
    auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) return std::nullopt;
    return static_cast<std::size_t>(it - labels.begin());
  }
  bool operator==(const ClassTable&) const = default;
};

/// Sorted distinct labels present among eligible records.
inline ClassTable class_table(std::span<const FeatureRecord> records, Task task)
{
  ClassTable t{task, {}};
  for (auto i : eligible_indices(records, task)) t.labels.push_back(task_label(records[i], task));
  std::sort(t.labels.begin(), t.labels.end());
  t.labels.erase(std::unique(t.labels.begin(), t.labels.end()), t.labels.end());
  return t;
}

// ---------------------------------------------------------------------------
// Split

struct Split
{
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Stratified by (surface, spin) pair over the task's eligible records. Each
/// stratum is shuffled with the seed and round(fraction * n) go to test, never
/// leaving a stratum without a training sample.
inline Split stratified_split(std::span<const FeatureRecord> records, Task task,
                              std::uint64_t seed, double testFraction = 0.2)
{
  if (!(testFraction >= 0.0 && testFraction < 1.0))
    throw ParameterError("test fraction must be in [0, 1)");
  std::map<std::pair<int, int>, std::vector<std::size_t>> strata;
  for (auto i : eligible_indices(records, task))
    strata[{records[i].surface, records[i].spin}].push_back(i);
  std::mt19937_64 rng(seed);
  Split s;
  for (auto& [key, idx] : strata)
  {
    std::shuffle(idx.begin(), idx.end(), rng);
    auto nTest = static_cast<std::size_t>(std::llround(testFraction * static_cast<double>(idx.size())));
    nTest = std::min(nTest, idx.size() - 1);
    s.test.insert(s.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(nTest));
    s.train.insert(s.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(nTest), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

// ---------------------------------------------------------------------------
// Representations

/// CNN: normalized mel 64x7. SVM: the same values as 1x448. GMM: 1x20 MFCC of
/// the raw log-mel.
inline Matrix representation(ModelKind kind, const Matrix& logMel)
{
  switch (kind)
  {
    case ModelKind::Cnn: return normalize_mel(logMel);
    case ModelKind::Svm:
    {
      auto m = normalize_mel(logMel);
      m.rows = 1;
      m.cols = m.data.size();
      return m;
    }
    case ModelKind::Gmm:
    {
      auto c = mfcc_from_log_mel(logMel);
      Matrix m(1, c.size());
      m.data = std::move(c);
      return m;
    }
  }
  throw ParameterError("unknown model kind");
}

// ---------------------------------------------------------------------------
// Model

using ModelVariant = std::variant<CnnModel, SvmModel, GmmModel>;

struct ClassifierModel
{
  ModelKind kind{ModelKind::Cnn};
  ClassTable classes;
  ModelVariant model;
  std::map<std::string, std::string> meta; // seed, training-data fingerprint, ...

  std::size_t num_classes() const { return classes.size(); }
};

struct Prediction
{
  std::size_t index{0};     // position in the class table
  int label{0};             // task label id
  std::vector<double> scores;
};

/// CNN scores are probabilities, SVM scores are margins, GMM scores are log
/// prior + log likelihood.
inline Prediction predict(const ClassifierModel& m, const Matrix& features)
{
  Prediction p;
  switch (m.kind)
  {
    case ModelKind::Cnn:
    {
      const auto& cnn = std::get<CnnModel>(m.model);
      if (features.rows != cnn.arch.inputH || features.cols != cnn.arch.inputW)
        throw ShapeError("cnn expects a " + std::to_string(cnn.arch.inputH) + "x" +
                         std::to_string(cnn.arch.inputW) + " mel spectrogram");
      p.scores = cnn_forward(cnn, features);
      break;
    }
    case ModelKind::Svm:
    {
      const auto& svm = std::get<SvmModel>(m.model);
      if (features.rows != 1) throw ShapeError("svm expects a flat feature vector");
      p.scores = svm.scores(features.data);
      break;
    }
    case ModelKind::Gmm:
    {
      const auto& gmm = std::get<GmmModel>(m.model);
      if (features.rows != 1) throw ShapeError("gmm expects a flat MFCC vector");
      p.scores = gmm.scores(features.data);
      break;
    }
  }
  p.index = static_cast<std::size_t>(std::max_element(p.scores.begin(), p.scores.end()) - p.scores.begin());
  p.label = m.classes.labels.at(p.index);
  return p;
}

/// Predict from a raw log-mel window.
inline Prediction predict_window(const ClassifierModel& m, const Matrix& logMel)
{
  return predict(m, representation(m.kind, logMel));
}

/// Batch form; the CNN runs in chunks.
inline std::vector<Prediction> predict_all(const ClassifierModel& m, std::span<const Matrix> logMels)
{
  std::vector<Prediction> out;
  out.reserve(logMels.size());
  if (m.kind == ModelKind::Cnn)
  {
    std::vector<Matrix> mels;
    for (const auto& l : logMels) mels.push_back(representation(ModelKind::Cnn, l));
    for (auto& probs : cnn_forward(std::get<CnnModel>(m.model), mels))
    {
      Prediction p;
      p.scores = std::move(probs);
      p.index = static_cast<std::size_t>(std::max_element(p.scores.begin(), p.scores.end()) - p.scores.begin());
      p.label = m.classes.labels.at(p.index);
      out.push_back(std::move(p));
    }
    return out;
  }
  for (const auto& l : logMels) out.push_back(predict_window(m, l));
  return out;
}

// ---------------------------------------------------------------------------
// Training

/// FNV-1a over the encoded records; identifies the training data in a model.
inline std::uint64_t fnv1a(std::string_view bytes)
{
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes)
  {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string fingerprint(std::span<const FeatureRecord> records)
{
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(encode_features(records))));
  return buf;
}

struct TrainOptions
{
  ModelKind method{ModelKind::Cnn};
  Task task{Task::Surface};
  std::uint64_t seed{0};
  double testFraction{0.2};
  TrainConfig cnn;
  CnnArchitecture arch; // nClasses is overwritten from the class table
  SvmConfig svm;
  GmmConfig gmm;
};

struct TrainOutcome
{
  ClassifierModel model;
  Split split;
  std::vector<TrainLogRow> log;                 // cnn only
  std::vector<std::vector<double>> emHistories; // gmm only
};

/// Splits, trains on the training part and returns the model plus split. For
/// the CNN the held-out part doubles as the early-stopping validation set.
inline TrainOutcome train_classifier(std::span<const FeatureRecord> records, const TrainOptions& opt)
{
  const auto table = class_table(records, opt.task);
  if (table.size() == 0)
    throw MissingLabelsError(std::string("no records carry ") + std::string(to_string(opt.task)) +
                             " labels");
  if (table.size() < 2)
    throw DegenerateError("task " + std::string(to_string(opt.task)) + " has a single class (" +
                          table.name(0) + ")");

  TrainOutcome out;
  out.split = stratified_split(records, opt.task, opt.seed, opt.testFraction);
  {
    std::vector<bool> seen(table.size(), false);
    for (auto i : out.split.train) seen[*table.index_of(task_label(records[i], opt.task))] = true;
    for (std::size_t c = 0; c < table.size(); ++c)
      if (!seen[c]) throw StratificationError("class '" + table.name(c) + "' is absent from the training split");
  }
  auto labels_of = [&](const std::vector<std::size_t>& idx) {
    std::vector<int> y;
    for (auto i : idx) y.push_back(static_cast<int>(*table.index_of(task_label(records[i], opt.task))));
    return y;
  };
  auto features_of = [&](const std::vector<std::size_t>& idx) {
    std::vector<Matrix> x;
    for (auto i : idx) x.push_back(representation(opt.method, records[i].logMel));
    return x;
  };
  const auto trainY = labels_of(out.split.train);
  const std::uint64_t trainerSeed = opt.seed + 1;

  ClassifierModel& m = out.model;
  m.kind = opt.method;
  m.classes = table;
  switch (opt.method)
  {
    case ModelKind::Cnn:
    {
      auto cfg = opt.cnn;
      cfg.seed = trainerSeed;
      auto arch = opt.arch;
      arch.nClasses = table.size();
      const auto trainX = features_of(out.split.train);
      const auto testX = features_of(out.split.test);
      const auto testY = labels_of(out.split.test);
      auto r = cnn_train(trainX, trainY, testX, testY, cfg, arch);
      m.model = std::move(r.model);
      out.log = std::move(r.log);
      m.meta["epochs"] = std::to_string(cfg.epochs);
      m.meta["batch_size"] = std::to_string(cfg.batchSize);
      m.meta["learning_rate"] = std::to_string(cfg.learningRate);
      m.meta["patience"] = std::to_string(cfg.patience);
      m.meta["best_epoch"] = std::to_string(r.bestEpoch);
      break;
    }
    case ModelKind::Svm:
    {
      auto cfg = opt.svm;
      cfg.seed = trainerSeed;
      std::vector<std::vector<double>> x;
      for (auto& f : features_of(out.split.train)) x.push_back(std::move(f.data));
      m.model = svm_train(x, trainY, table.size(), cfg);
      m.meta["lambda"] = std::to_string(cfg.lambda);
      m.meta["epochs"] = std::to_string(cfg.epochs);
      break;
    }
    case ModelKind::Gmm:
    {
      auto cfg = opt.gmm;
      cfg.seed = trainerSeed;
      std::vector<std::vector<double>> x;
      for (auto& f : features_of(out.split.train)) x.push_back(std::move(f.data));
      const auto names = table.names();
      m.model = gmm_train(x, trainY, table.size(), cfg, names, &out.emHistories);
      m.meta["variance_floor"] = std::to_string(cfg.varianceFloor);
      break;
    }
  }
  m.meta["seed"] = std::to_string(opt.seed);
  m.meta["test_fraction"] = std::to_string(opt.testFraction);
  m.meta["data_fnv1a"] = fingerprint(records);
  return out;
}

} // namespace ttsound
