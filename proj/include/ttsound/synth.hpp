#pragma once

// Synthetic signals with known ground truth: damped tonal clicks standing in
// for ball impacts, pink and speech-band noise, and band-limited noise
// windows for classifier smoke tests.

#include "audio_io.hpp"
#include "filter.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace ttsound::synth {

struct ClickShape
{
  double freqHz{11000.0};
  double durationMs{3.0};
  double decayMs{0.6};
  double amplitude{0.5};
};

/// Exponentially damped sine starting at zero phase; sample 0 is the onset.
inline std::vector<double> damped_click(const ClickShape& shape,
                                        int sampleRate = kDatasetSampleRate)
{
  const auto n = static_cast<std::size_t>(std::llround(shape.durationMs * sampleRate / 1000.0));
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
  {
    const double t = static_cast<double>(i) / sampleRate;
    out[i] = shape.amplitude * std::exp(-t / (shape.decayMs / 1000.0)) *
             std::sin(2.0 * std::numbers::pi * shape.freqHz * t);
  }
  return out;
}

inline void add_at(std::vector<double>& dst, const std::vector<double>& src,
                   std::size_t offset)
{
  for (std::size_t i = 0; i < src.size() && offset + i < dst.size(); ++i)
    dst[offset + i] += src[i];
}

/// Pink (1/f) noise via Paul Kellet's economy filter, scaled to `targetRms`.
inline std::vector<double> pink_noise(std::size_t n, double targetRms, std::mt19937_64& rng)
{
  std::normal_distribution<double> white(0.0, 1.0);
  std::vector<double> out(n);
  double b0 = 0, b1 = 0, b2 = 0;
  for (auto& v : out)
  {
    const double w = white(rng);
    b0 = 0.99765 * b0 + w * 0.0990460;
    b1 = 0.96300 * b1 + w * 0.2965164;
    b2 = 0.57000 * b2 + w * 1.0526913;
    v = b0 + b1 + b2 + w * 0.1848;
  }
  const double r = rms(out);
  if (r > 0.0)
    for (auto& v : out) v *= targetRms / r;
  return out;
}

/// Gaussian noise band-limited by Butterworth high- and low-pass filters.
inline std::vector<double> band_noise(std::size_t n, double lowHz, double highHz,
                                      std::mt19937_64& rng,
                                      int sampleRate = kDatasetSampleRate)
{
  std::normal_distribution<double> white(0.0, 1.0);
  // Extra lead-in lets the filters settle before the returned span.
  const std::size_t lead = 1024;
  std::vector<double> x(n + lead);
  for (auto& v : x) v = white(rng);
  auto hp = design_butterworth({4, lowHz, FilterKind::HighPass, sampleRate});
  auto lp = design_butterworth({4, highHz, FilterKind::LowPass, sampleRate});
  x = filter_forward(lp, filter_forward(hp, x));
  return {x.begin() + static_cast<std::ptrdiff_t>(lead), x.end()};
}

/// Speech-band noise: 300 Hz to 3 kHz with a slow syllable-rate envelope.
inline AudioClip speech_noise(std::size_t n, std::uint64_t seed,
                              int sampleRate = kDatasetSampleRate)
{
  std::mt19937_64 rng(seed);
  auto x = band_noise(n, 300.0, 3000.0, rng, sampleRate);
  for (std::size_t i = 0; i < n; ++i)
  {
    const double t = static_cast<double>(i) / sampleRate;
    x[i] *= 0.3 + 0.7 * std::abs(std::sin(2.0 * std::numbers::pi * 2.5 * t));
  }
  const double r = rms(x);
  for (auto& v : x) v *= 0.1 / r;
  return AudioClip(std::move(x), sampleRate);
}

/// A recording with clicks at known onsets.
struct Fixture
{
  AudioClip clip;
  std::vector<std::size_t> onsets;
};

struct FixtureOptions
{
  double durationS{1.0};
  int clicks{3};
  double minSpacingMs{150.0};
  double edgeMarginMs{60.0};
  double minAmplitude{0.2};
  double maxAmplitude{0.8};
  double noiseRms{1e-3}; // pink noise floor, 0 for digital silence
};

/// Randomised fixture: `clicks` damped 11 kHz clicks at random, well-spaced
/// onsets over a low-level pink noise floor.
inline Fixture click_fixture(std::uint64_t seed, const FixtureOptions& opt = {},
                             int sampleRate = kDatasetSampleRate)
{
  std::mt19937_64 rng(seed);
  const auto n = static_cast<std::size_t>(opt.durationS * sampleRate);
  std::vector<double> x =
      opt.noiseRms > 0.0 ? pink_noise(n, opt.noiseRms, rng) : std::vector<double>(n, 0.0);

  const auto margin = static_cast<std::size_t>(opt.edgeMarginMs * sampleRate / 1000.0);
  const auto spacing = static_cast<std::size_t>(opt.minSpacingMs * sampleRate / 1000.0);
  const auto clicks = static_cast<std::size_t>(std::max(opt.clicks, 0));
  const std::size_t needed = 2 * margin + (clicks > 0 ? (clicks - 1) * spacing : 0);
  if (needed > n) throw ParameterError("fixture too short for the requested clicks");
  // Sorted offsets within the slack, then one spacing per preceding click.
  std::uniform_int_distribution<std::size_t> slack(0, n - needed);
  std::uniform_real_distribution<double> amp(opt.minAmplitude, opt.maxAmplitude);
  std::uniform_real_distribution<double> decay(0.4, 0.9);

  Fixture f;
  for (std::size_t i = 0; i < clicks; ++i) f.onsets.push_back(slack(rng));
  std::sort(f.onsets.begin(), f.onsets.end());
  for (std::size_t i = 0; i < clicks; ++i) f.onsets[i] += margin + i * spacing;
  for (std::size_t onset : f.onsets)
  {
    ClickShape shape;
    shape.amplitude = amp(rng);
    shape.decayMs = decay(rng);
    add_at(x, damped_click(shape, sampleRate), onset);
  }
  f.clip = AudioClip(std::move(x), sampleRate);
  return f;
}

inline std::vector<Fixture> click_fixtures(std::size_t count, std::uint64_t seed,
                                           const FixtureOptions& opt = {})
{
  std::vector<Fixture> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(click_fixture(seed * 1000003 + i, opt));
  return out;
}

/// One 661-sample window of noise centred on `centerHz` (+-500 Hz), random gain.
inline std::vector<double> band_window(double centerHz, std::mt19937_64& rng,
                                       std::size_t length = 661)
{
  std::uniform_real_distribution<double> gain(0.05, 0.5);
  auto x = band_noise(length, centerHz - 500.0, centerHz + 500.0, rng);
  const double g = gain(rng) / std::max(rms(x), 1e-12);
  for (auto& v : x) v *= g;
  return x;
}

} // namespace ttsound::synth
