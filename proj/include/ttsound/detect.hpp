#pragma once

// First pipeline stage: high-pass the signal, compare short-frame energy
// against a decaying average, and report bounce onsets at sample resolution.

#include "audio_io.hpp"
#include "config.hpp"
#include "error.hpp"
#include "filter.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ttsound {

struct DetectorConfig
{
  double frameMs{1.0};
  double gamma{0.995};              // EMA decay per frame
  double thresholdMultiplier{8.0};
  double refractoryMs{30.0};
  double emaFloor{1e-8};            // lower bound on the average energy
  double onsetCalibration{1.0};     // per-sample threshold = multiplier * avg * this

  std::size_t frame_length(int sampleRate) const
  {
    // The epsilon keeps e.g. 1 ms at 48 kHz from flooring to 47.
    return static_cast<std::size_t>(std::floor(frameMs * sampleRate / 1000.0 + 1e-9));
  }

  std::size_t refractory_samples(int sampleRate) const
  {
    return static_cast<std::size_t>(std::llround(refractoryMs * sampleRate / 1000.0));
  }

  void validate(int sampleRate) const
  {
    if (!(gamma > 0.0 && gamma < 1.0))
      throw ParameterError("gamma must lie in (0, 1), got " + std::to_string(gamma));
    if (!(thresholdMultiplier > 1.0))
      throw ParameterError("threshold_multiplier must be > 1, got " +
                           std::to_string(thresholdMultiplier));
    if (!(refractoryMs >= 0.0))
      throw ParameterError("refractory_ms must be >= 0");
    if (!(emaFloor > 0.0)) throw ParameterError("ema_floor must be > 0");
    if (!(onsetCalibration > 0.0)) throw ParameterError("onset_calibration must be > 0");
    if (frame_length(sampleRate) < 8)
      throw ParameterError("frame_ms gives " + std::to_string(frame_length(sampleRate)) +
                           " samples per frame; at least 8 are required");
  }
};

/// Keys understood in detector config files.
inline const std::set<std::string>& detector_config_keys()
{
  static const std::set<std::string> keys{
      "frame_ms",      "gamma",        "threshold_multiplier", "refractory_ms",
      "ema_floor",     "filter.order", "filter.cutoff_hz",     "onset_calibration"};
  return keys;
}

inline void apply_detector_config(const KeyValues& kv, DetectorConfig& config,
                                  FilterSpec& filter)
{
  kv.get("frame_ms", config.frameMs);
  kv.get("gamma", config.gamma);
  kv.get("threshold_multiplier", config.thresholdMultiplier);
  kv.get("refractory_ms", config.refractoryMs);
  kv.get("ema_floor", config.emaFloor);
  kv.get("onset_calibration", config.onsetCalibration);
  kv.get("filter.order", filter.order);
  kv.get("filter.cutoff_hz", filter.cutoffHz);
}

struct BounceEvent
{
  std::size_t onsetSample{0};
  double onsetS{0.0};
  double peakEnergy{0.0}; // mean-square energy of the triggering frame
  double emaAtOnset{0.0};
};

/// Mean of squared samples over consecutive non-overlapping frames. A
/// trailing partial frame is dropped.
inline std::vector<double> frame_energy(std::span<const double> x, std::size_t frameLen)
{
  if (frameLen == 0) throw ParameterError("frame length must be >= 1 sample");
  std::vector<double> e(x.size() / frameLen);
  for (std::size_t k = 0; k < e.size(); ++k)
  {
    double acc = 0.0;
    for (std::size_t i = k * frameLen; i < (k + 1) * frameLen; ++i) acc += x[i] * x[i];
    e[k] = acc / static_cast<double>(frameLen);
  }
  return e;
}

inline std::vector<double> frame_energy(const AudioClip& clip, double frameMs)
{
  auto len = static_cast<std::size_t>(std::floor(frameMs * clip.sample_rate() / 1000.0 + 1e-9));
  return frame_energy(clip.samples(), len);
}

inline double ema_update(double avg, double e, double gamma)
{
  return gamma * avg + (1.0 - gamma) * e;
}

/// Frame-level decision logic shared by the batch and streaming detectors.
/// Feed it high-passed frames in order.
class EnergyPeakTracker
{
public:
  EnergyPeakTracker(const DetectorConfig& config, int sampleRate)
      : mConfig(config), mSampleRate(sampleRate),
        mRefractory(config.refractory_samples(sampleRate))
  {
    config.validate(sampleRate);
  }

  std::optional<BounceEvent> push(std::span<const double> frame, std::size_t frameStart)
  {
    double e = 0.0;
    for (double v : frame) e += v * v;
    e /= static_cast<double>(frame.size());

    if (!mSeeded)
    {
      // The first frame seeds the average and never triggers.
      mAverage = e;
      mSeeded = true;
      return std::nullopt;
    }

    const bool refractory = frameStart < mRefractoryEnd;
    const double base = std::max(mAverage, mConfig.emaFloor);
    if (e > mConfig.thresholdMultiplier * base)
    {
      if (refractory) return std::nullopt;
      const double sampleThreshold =
          mConfig.thresholdMultiplier * base * mConfig.onsetCalibration;
      std::size_t offset = 0;
      while (offset < frame.size() && frame[offset] * frame[offset] <= sampleThreshold)
        ++offset;
      if (offset == frame.size()) offset = 0;

      BounceEvent ev;
      ev.onsetSample = frameStart + offset;
      ev.onsetS = static_cast<double>(ev.onsetSample) / mSampleRate;
      ev.peakEnergy = e;
      ev.emaAtOnset = mAverage;
      mRefractoryEnd = ev.onsetSample + mRefractory;
      return ev;
    }
    if (refractory) return std::nullopt;
    mAverage = ema_update(mAverage, e, mConfig.gamma);
    return std::nullopt;
  }

  double average() const noexcept { return mAverage; }

private:
  DetectorConfig mConfig;
  int mSampleRate;
  std::size_t mRefractory;
  std::size_t mRefractoryEnd{0};
  double mAverage{0.0};
  bool mSeeded{false};
};

/// Batch detector: zero-phase high-pass, then frame-energy peak tracking.
/// Events come back in ascending onset order.
inline std::vector<BounceEvent> detect_bounces(const AudioClip& clip,
                                               const DetectorConfig& config,
                                               const FilterSpec& filter)
{
  config.validate(clip.sample_rate());
  FilterSpec spec = filter;
  spec.sampleRate = clip.sample_rate();
  const auto cascade = design_butterworth(spec);

  const std::size_t frameLen = config.frame_length(clip.sample_rate());
  std::vector<BounceEvent> events;
  if (clip.size() < frameLen) return events;
  const auto filtered = clip.size() > 6 * static_cast<std::size_t>(spec.order)
                            ? filter_zero_phase(cascade, clip.samples())
                            : filter_forward(cascade, clip.samples());

  EnergyPeakTracker tracker(config, clip.sample_rate());
  std::span<const double> all(filtered);
  for (std::size_t start = 0; start + frameLen <= all.size(); start += frameLen)
    if (auto ev = tracker.push(all.subspan(start, frameLen), start))
      events.push_back(*ev);
  return events;
}

// ---------------------------------------------------------------------------
// Streaming

struct AudioFrame
{
  std::size_t index{0}; // position of this frame in the stream, 0-based
  std::vector<double> samples;
};

/// Causal detector for live input: one instance per stream. Each call to
/// push() returns the event (if any) whose energy crossed the threshold in
/// that frame, so detection latency is at most one frame.
class StreamingDetector
{
public:
  StreamingDetector(const DetectorConfig& config, const FilterSpec& filter,
                    int sampleRate = kDatasetSampleRate)
      : mCascade(make_cascade(filter, sampleRate)), mState(mCascade),
        mTracker(config, sampleRate), mFrameLen(config.frame_length(sampleRate))
  {}

  StreamingDetector(const StreamingDetector&) = delete;
  StreamingDetector& operator=(const StreamingDetector&) = delete;

  std::size_t frame_length() const noexcept { return mFrameLen; }

  std::optional<BounceEvent> push(const AudioFrame& frame)
  {
    if (frame.index != mNextIndex)
      throw ProtocolError("expected frame " + std::to_string(mNextIndex) + ", got " +
                          std::to_string(frame.index));
    if (frame.samples.size() != mFrameLen)
      throw ProtocolError("frame " + std::to_string(frame.index) + " has " +
                          std::to_string(frame.samples.size()) + " samples, expected " +
                          std::to_string(mFrameLen));
    ++mNextIndex;
    mScratch.resize(mFrameLen);
    mState.process(frame.samples, mScratch);
    return mTracker.push(mScratch, frame.index * mFrameLen);
  }

private:
  static BiquadCascade make_cascade(FilterSpec spec, int sampleRate)
  {
    spec.sampleRate = sampleRate;
    return design_butterworth(spec);
  }

  BiquadCascade mCascade;
  CascadeState mState;
  EnergyPeakTracker mTracker;
  std::size_t mFrameLen;
  std::size_t mNextIndex{0};
  std::vector<double> mScratch;
};

using FrameSource = std::function<std::optional<AudioFrame>()>;

/// Drains `source` through a StreamingDetector.
inline std::vector<BounceEvent> detect_streaming(const FrameSource& source,
                                                 const DetectorConfig& config,
                                                 const FilterSpec& filter,
                                                 int sampleRate = kDatasetSampleRate)
{
  StreamingDetector detector(config, filter, sampleRate);
  std::vector<BounceEvent> events;
  while (auto frame = source())
    if (auto ev = detector.push(*frame)) events.push_back(*ev);
  return events;
}

/// Replays a clip as consecutive whole frames of `frameLen` samples.
inline FrameSource replay_frames(const AudioClip& clip, std::size_t frameLen)
{
  return [&clip, frameLen, next = std::size_t{0}]() mutable -> std::optional<AudioFrame> {
    if (frameLen == 0 || (next + 1) * frameLen > clip.size()) return std::nullopt;
    AudioFrame f;
    f.index = next;
    auto s = clip.samples().subspan(next * frameLen, frameLen);
    f.samples.assign(s.begin(), s.end());
    ++next;
    return f;
  };
}

inline constexpr std::size_t kWindowLength = 661;

/// Fixed-length window from the unfiltered signal starting `preOnsetMs`
/// before the onset. Regions outside the clip are zero.
inline std::vector<double> extract_window(const AudioClip& clip, std::size_t onsetSample,
                                          std::size_t windowLen = kWindowLength,
                                          double preOnsetMs = 1.0)
{
  const auto pre = static_cast<std::ptrdiff_t>(
      std::floor(preOnsetMs * clip.sample_rate() / 1000.0 + 1e-9));
  const auto start = static_cast<std::ptrdiff_t>(onsetSample) - pre;
  std::vector<double> w(windowLen, 0.0);
  for (std::size_t i = 0; i < windowLen; ++i)
  {
    const auto src = start + static_cast<std::ptrdiff_t>(i);
    if (src >= 0 && static_cast<std::size_t>(src) < clip.size())
      w[i] = clip[static_cast<std::size_t>(src)];
  }
  return w;
}

inline std::vector<double> extract_window(const AudioClip& clip, const BounceEvent& ev,
                                          std::size_t windowLen = kWindowLength,
                                          double preOnsetMs = 1.0)
{
  return extract_window(clip, ev.onsetSample, windowLen, preOnsetMs);
}

} // namespace ttsound
