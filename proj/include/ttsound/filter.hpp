#pragma once

// Butterworth design as a cascade of second-order sections, plus causal and
// forward-backward (zero-phase) evaluation.

#include "audio_io.hpp"
#include "error.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace ttsound {

enum class FilterKind
{
  HighPass,
  LowPass,
};

struct FilterSpec
{
  int order{5};
  double cutoffHz{10000.0};
  FilterKind kind{FilterKind::HighPass};
  int sampleRate{kDatasetSampleRate};

  void validate() const
  {
    if (order < 1)
      throw ParameterError("filter order must be >= 1, got " + std::to_string(order));
    if (sampleRate <= 0) throw ParameterError("filter sample rate must be positive");
    if (!(cutoffHz > 0.0) || !(cutoffHz < 0.5 * sampleRate))
      throw ParameterError("cutoff " + std::to_string(cutoffHz) +
                           " Hz must lie strictly between 0 and Nyquist (" +
                           std::to_string(0.5 * sampleRate) + " Hz)");
  }
};

/// y = b0 x + b1 x[-1] + b2 x[-2] - a1 y[-1] - a2 y[-2]. A first-order
/// section has b2 = a2 = 0.
struct Biquad
{
  double b0{1.0}, b1{0.0}, b2{0.0};
  double a1{0.0}, a2{0.0};

  bool stable() const { return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2; }

  std::complex<double> response(double omega) const
  {
    const std::complex<double> z1 = std::polar(1.0, -omega);
    const std::complex<double> z2 = z1 * z1;
    return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
  }
};

struct BiquadCascade
{
  std::vector<Biquad> sections;
  double gain{1.0};

  bool stable() const
  {
    return std::all_of(sections.begin(), sections.end(),
                       [](const Biquad& s) { return s.stable(); });
  }

  /// H(e^{j omega}), omega in radians per sample.
  std::complex<double> response(double omega) const
  {
    std::complex<double> h = gain;
    for (const auto& s : sections) h *= s.response(omega);
    return h;
  }

  double magnitude_db(double freqHz, int sampleRate) const
  {
    double omega = 2.0 * std::numbers::pi * freqHz / sampleRate;
    return 20.0 * std::log10(std::abs(response(omega)));
  }
};

/// Analog Butterworth prototype mapped through the bilinear transform, with
/// the cutoff pre-warped so the digital -3 dB point lands on `cutoffHz`.
/// Odd orders get one first-order section.
inline BiquadCascade design_butterworth(const FilterSpec& spec)
{
  spec.validate();
  const int n = spec.order;
  // s = (1 - z^-1) / (1 + z^-1) with the cutoff warped into the same units.
  const double wc = std::tan(std::numbers::pi * spec.cutoffHz / spec.sampleRate);
  const double wc2 = wc * wc;
  const bool highPass = spec.kind == FilterKind::HighPass;

  BiquadCascade cascade;
  for (int k = 0; k < n / 2; ++k)
  {
    // Conjugate pole pair of the normalised prototype: s^2 + a s + 1.
    const double a = 2.0 * std::sin(std::numbers::pi * (2 * k + 1) / (2.0 * n));
    const double d0 = 1.0 + a * wc + wc2;
    Biquad s;
    s.a1 = (2.0 * wc2 - 2.0) / d0;
    s.a2 = (1.0 - a * wc + wc2) / d0;
    if (highPass)
    {
      s.b0 = 1.0 / d0;
      s.b1 = -2.0 / d0;
      s.b2 = 1.0 / d0;
    }
    else
    {
      s.b0 = wc2 / d0;
      s.b1 = 2.0 * wc2 / d0;
      s.b2 = wc2 / d0;
    }
    cascade.sections.push_back(s);
  }
  if (n % 2 == 1)
  {
    const double d0 = 1.0 + wc;
    Biquad s;
    s.a1 = (wc - 1.0) / d0;
    if (highPass)
    {
      s.b0 = 1.0 / d0;
      s.b1 = -1.0 / d0;
    }
    else
    {
      s.b0 = wc / d0;
      s.b1 = wc / d0;
    }
    cascade.sections.push_back(s);
  }
  return cascade;
}

inline BiquadCascade design_butterworth_highpass(FilterSpec spec)
{
  spec.kind = FilterKind::HighPass;
  return design_butterworth(spec);
}

/// Delay-line state of a cascade evaluated in transposed direct form II.
/// One instance per stream.
class CascadeState
{
public:
  explicit CascadeState(const BiquadCascade& cascade)
      : mCascade(&cascade), mZ(2 * cascade.sections.size(), 0.0)
  {}

  double process(double x)
  {
    double v = x * mCascade->gain;
    for (std::size_t i = 0; i < mCascade->sections.size(); ++i)
    {
      const Biquad& s = mCascade->sections[i];
      double& z1 = mZ[2 * i];
      double& z2 = mZ[2 * i + 1];
      const double y = s.b0 * v + z1;
      z1 = s.b1 * v - s.a1 * y + z2;
      z2 = s.b2 * v - s.a2 * y;
      v = y;
    }
    return v;
  }

  void process(std::span<const double> in, std::span<double> out)
  {
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = process(in[i]);
  }

  void reset() { std::fill(mZ.begin(), mZ.end(), 0.0); }

private:
  const BiquadCascade* mCascade;
  std::vector<double> mZ;
};

inline std::vector<double> filter_forward(const BiquadCascade& cascade,
                                          std::span<const double> x)
{
  std::vector<double> y(x.size());
  CascadeState state(cascade);
  state.process(x, y);
  return y;
}

inline AudioClip filter_forward(const BiquadCascade& cascade, const AudioClip& clip)
{
  return AudioClip(filter_forward(cascade, clip.samples()), clip.sample_rate());
}

/// Effective filter order of a cascade (a first-order section counts once).
inline int cascade_order(const BiquadCascade& cascade)
{
  int order = 0;
  for (const auto& s : cascade.sections) order += (s.a2 == 0.0 && s.b2 == 0.0) ? 1 : 2;
  return order;
}

/// Forward pass, reverse, forward pass, reverse. Both ends are extended by
/// odd reflection of 6 * order samples to tame start-up transients, and the
/// extension is trimmed afterwards.
inline std::vector<double> filter_zero_phase(const BiquadCascade& cascade,
                                             std::span<const double> x)
{
  const std::size_t pad = 6 * static_cast<std::size_t>(cascade_order(cascade));
  const std::size_t n = x.size();
  if (n <= pad)
    throw LengthError("zero-phase filtering needs more than " + std::to_string(pad) +
                      " samples, got " + std::to_string(n));

  std::vector<double> ext(n + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i)
  {
    ext[i] = 2.0 * x[0] - x[pad - i];
    ext[pad + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];
  }
  std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(pad));

  CascadeState state(cascade);
  state.process(ext, ext);
  std::reverse(ext.begin(), ext.end());
  state.reset();
  state.process(ext, ext);
  std::reverse(ext.begin(), ext.end());

  return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
          ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

inline AudioClip filter_zero_phase(const BiquadCascade& cascade, const AudioClip& clip)
{
  return AudioClip(filter_zero_phase(cascade, clip.samples()), clip.sample_rate());
}

} // namespace ttsound
