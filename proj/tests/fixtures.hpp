#pragma once

// Synthetic feature records and small models shared by the classifier, CLI
// and acceptance tests.

#include <ttsound/classify.hpp>
#include <ttsound/features.hpp>
#include <ttsound/synth.hpp>

#include <random>
#include <vector>

namespace fixtures {

struct BandClass
{
  int surface;
  int spin;
  double centerHz;
};

/// `perClass` log-mel records of band noise for each class, interleaved.
inline std::vector<ttsound::FeatureRecord> band_records(const std::vector<BandClass>& classes,
                                                        std::size_t perClass, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  ttsound::MelExtractor ex;
  std::vector<ttsound::FeatureRecord> out;
  for (std::size_t i = 0; i < perClass; ++i)
    for (const auto& c : classes)
    {
      ttsound::FeatureRecord r;
      r.surface = static_cast<std::int8_t>(c.surface);
      r.spin = static_cast<std::int8_t>(c.spin);
      r.logMel = ex.log_mel(ttsound::synth::band_window(c.centerHz, rng));
      // Stored as float32 in TTFE1; keep in-memory records identical to decoded ones.
      for (auto& v : r.logMel.data) v = static_cast<double>(static_cast<float>(v));
      out.push_back(std::move(r));
    }
  return out;
}

/// Racket 1 at 2 kHz against the table at 15 kHz.
inline std::vector<ttsound::FeatureRecord> two_band_records(std::size_t perClass, std::uint64_t seed)
{
  return band_records({{ttsound::id(ttsound::SurfaceClass::Racket01), -1, 2000.0},
                       {ttsound::id(ttsound::SurfaceClass::Table), -1, 15000.0}},
                      perClass, seed);
}

/// Random log-mel window in the value range of real features.
inline ttsound::Matrix random_log_mel(std::mt19937_64& rng)
{
  std::normal_distribution<double> g(-8.0, 3.0);
  ttsound::Matrix m(ttsound::kMelBands, ttsound::kMelFrames);
  for (auto& v : m.data) v = g(rng);
  return m;
}

/// Default-architecture CNN with random weights and batchnorm statistics.
inline ttsound::ClassifierModel random_cnn(std::uint64_t seed, ttsound::Task task)
{
  std::mt19937_64 rng(seed);
  ttsound::ClassifierModel m;
  m.kind = ttsound::ModelKind::Cnn;
  m.classes.task = task;
  const int n = task == ttsound::Task::Surface ? 13 : 3;
  for (int i = 0; i < n; ++i) m.classes.labels.push_back(i);
  ttsound::CnnArchitecture arch;
  arch.nClasses = static_cast<std::size_t>(n);
  ttsound::CnnModel cnn(arch);
  ttsound::he_initialize(cnn, rng);
  std::normal_distribution<double> g(0.0, 0.3);
  for (auto& b : cnn.blocks)
  {
    for (auto& v : b.gamma) v = 1.0 + g(rng);
    for (auto& v : b.beta) v = g(rng);
    for (auto& v : b.runningMean) v = g(rng);
    for (auto& v : b.runningVar) v = 0.5 + std::abs(g(rng));
  }
  ttsound::quantize_float32(cnn);
  m.model = std::move(cnn);
  m.meta["seed"] = std::to_string(seed);
  return m;
}

/// Mix of trained SVM/GMM models and random CNNs.
inline std::vector<ttsound::ClassifierModel> model_zoo(std::size_t count)
{
  std::vector<ttsound::ClassifierModel> zoo;
  const auto recs = band_records({{0, 0, 2000.0}, {0, 2, 6000.0}, {4, 1, 11000.0}, {10, -1, 15000.0}}, 30, 11);
  for (std::size_t i = 0; zoo.size() < count; ++i)
  {
    const ttsound::Task task = i % 2 == 0 ? ttsound::Task::Surface : ttsound::Task::Spin;
    switch (i % 3)
    {
      case 0: zoo.push_back(random_cnn(i, task)); break;
      case 1:
      case 2:
      {
        ttsound::TrainOptions opt;
        opt.method = i % 3 == 1 ? ttsound::ModelKind::Svm : ttsound::ModelKind::Gmm;
        opt.task = task;
        opt.seed = i;
        opt.svm.epochs = 5;
        opt.gmm.components = 2 + i % 4;
        zoo.push_back(ttsound::train_classifier(recs, opt).model);
        break;
      }
    }
  }
  return zoo;
}

} // namespace fixtures
