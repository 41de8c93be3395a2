#pragma once

// Onset-aligned windows -> log-mel spectrogram (CNN and SVM input) and
// frame-averaged MFCCs (GMM input). The FFT is delegated to FFTW.

#include "audio_io.hpp"
#include "error.hpp"
#include "matrix.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace ttsound {

struct StftSpec
{
  std::size_t nFft{256};
  std::size_t hop{64};

  void validate() const
  {
    if (nFft == 0 || (nFft & (nFft - 1)) != 0)
      throw ParameterError("n_fft must be a power of two, got " + std::to_string(nFft));
    if (hop == 0 || hop > nFft)
      throw ParameterError("hop must lie in [1, n_fft], got " + std::to_string(hop));
  }

  std::size_t bins() const { return nFft / 2 + 1; }
  std::size_t frames(std::size_t windowLen) const
  {
    return windowLen < nFft ? 0 : (windowLen - nFft) / hop + 1;
  }
};

struct MelSpec
{
  std::size_t nMels{64};
  int sampleRate{kDatasetSampleRate};
  double fMin{0.0};
  double fMax{22050.0};
};

inline constexpr std::size_t kMelBands = 64;
inline constexpr std::size_t kMelFrames = 7;
inline constexpr std::size_t kMelCells = kMelBands * kMelFrames;
inline constexpr std::size_t kMfccCoeffs = 20;
inline constexpr double kLogFloor = 1e-10;

/// Periodic Hann window.
inline std::vector<double> hann_periodic(std::size_t n)
{
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / n);
  return w;
}

namespace detail {
inline std::mutex& fftw_planner_mutex()
{
  static std::mutex m;
  return m;
}
} // namespace detail

/// Real-input FFT of a fixed size, returning bins 0..n/2. Not thread-safe per
/// instance; planning is serialised across instances.
class RealFft
{
public:
  explicit RealFft(std::size_t n) : mN(n)
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    mIn = fftw_alloc_real(n);
    mOut = fftw_alloc_complex(n / 2 + 1);
    mPlan = fftw_plan_dft_r2c_1d(static_cast<int>(n), mIn, mOut, FFTW_ESTIMATE);
  }

  ~RealFft()
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(mPlan);
    fftw_free(mIn);
    fftw_free(mOut);
  }

  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const noexcept { return mN; }

  void forward(std::span<const double> in, std::span<std::complex<double>> out)
  {
    std::copy(in.begin(), in.end(), mIn);
    fftw_execute(mPlan);
    for (std::size_t k = 0; k <= mN / 2; ++k) out[k] = {mOut[k][0], mOut[k][1]};
  }

private:
  std::size_t mN;
  double* mIn{nullptr};
  fftw_complex* mOut{nullptr};
  fftw_plan mPlan{nullptr};
};

/// Bins x frames complex spectrogram. Frame t covers [t*hop, t*hop + n_fft).
struct ComplexSpectrogram
{
  std::size_t bins{0};
  std::size_t frames{0};
  std::vector<std::complex<double>> data; // bin-major: data[bin * frames + frame]

  std::complex<double> operator()(std::size_t bin, std::size_t frame) const
  {
    return data[bin * frames + frame];
  }
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Centre frequencies (Hz) of the mel filters, equally spaced in mel.
inline std::vector<double> mel_centers(const MelSpec& spec)
{
  const double lo = hz_to_mel(spec.fMin), hi = hz_to_mel(spec.fMax);
  std::vector<double> c(spec.nMels);
  for (std::size_t m = 0; m < spec.nMels; ++m)
    c[m] = mel_to_hz(lo + (hi - lo) * static_cast<double>(m + 1) / (spec.nMels + 1));
  return c;
}

/// Triangular HTK-mel filters, [n_mels x (n_fft/2 + 1)]. Each triangle spans
/// its neighbours' centres but never less than one FFT bin on either side,
/// so narrow low-frequency filters still reach a bin. Rows are scaled to a
/// peak weight of 1.
inline Matrix mel_filterbank(const MelSpec& spec, std::size_t nFft)
{
  if (!(spec.fMin >= 0.0 && spec.fMin < spec.fMax && spec.fMax <= 0.5 * spec.sampleRate))
    throw ParameterError("mel range must satisfy 0 <= f_min < f_max <= Nyquist");
  const std::size_t bins = nFft / 2 + 1;
  if (spec.nMels == 0 || spec.nMels > bins)
    throw DesignError(std::to_string(spec.nMels) + " mel bands exceed the " +
                      std::to_string(bins) + " bins of a " + std::to_string(nFft) +
                      "-point FFT");

  const double binHz = static_cast<double>(spec.sampleRate) / nFft;
  const auto centers = mel_centers(spec);
  const double lo = hz_to_mel(spec.fMin), hi = hz_to_mel(spec.fMax);
  Matrix fb(spec.nMels, bins);
  std::vector<std::size_t> empty;
  for (std::size_t m = 0; m < spec.nMels; ++m)
  {
    const double c = centers[m];
    const double left = m == 0 ? mel_to_hz(lo) : centers[m - 1];
    const double right = m + 1 == spec.nMels ? mel_to_hz(hi) : centers[m + 1];
    const double l = std::min(left, c - binHz);
    const double r = std::max(right, c + binHz);
    double peakWeight = 0.0;
    for (std::size_t k = 0; k < bins; ++k)
    {
      const double f = binHz * static_cast<double>(k);
      double w = 0.0;
      if (f > l && f <= c)
        w = (f - l) / (c - l);
      else if (f > c && f < r)
        w = (r - f) / (r - c);
      fb(m, k) = w;
      peakWeight = std::max(peakWeight, w);
    }
    if (peakWeight <= 0.0)
      empty.push_back(m);
    else
      for (auto& w : fb.row(m)) w /= peakWeight;
  }
  if (!empty.empty())
  {
    std::string list;
    for (auto m : empty) list += (list.empty() ? "" : ", ") + std::to_string(m);
    throw DesignError("empty mel filters: " + list);
  }
  return fb;
}

inline Matrix mel_filterbank(std::size_t nMels = kMelBands, std::size_t nFft = 256,
                             int sampleRate = kDatasetSampleRate, double fMin = 0.0,
                             double fMax = 22050.0)
{
  return mel_filterbank(MelSpec{nMels, sampleRate, fMin, fMax}, nFft);
}

/// Orthonormal DCT-II.
inline std::vector<double> dct2(std::span<const double> x)
{
  const std::size_t n = x.size();
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k)
  {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      acc += x[i] * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * i + 1.0) / (2.0 * n));
    out[k] = acc * std::sqrt((k == 0 ? 1.0 : 2.0) / n);
  }
  return out;
}

/// Inverse of dct2 (orthonormal DCT-III).
inline std::vector<double> idct2(std::span<const double> X)
{
  const std::size_t n = X.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
  {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      acc += X[k] * std::sqrt((k == 0 ? 1.0 : 2.0) / n) *
             std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * i + 1.0) / (2.0 * n));
    out[i] = acc;
  }
  return out;
}

/// Per-window z-score over all cells (population std). A constant input,
/// e.g. from an all-zero window, maps to all zeros.
inline Matrix normalize_mel(const Matrix& logMel)
{
  const double n = static_cast<double>(logMel.size());
  double mean = 0.0;
  for (double v : logMel.data) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : logMel.data) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);

  Matrix out(logMel.rows, logMel.cols);
  if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) return out;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = (logMel.data[i] - mean) / sd;
  return out;
}

/// Frame-averaged MFCCs: orthonormal DCT-II of each log-mel column, keeping
/// the first `nCoeffs` coefficients.
inline std::vector<double> mfcc_from_log_mel(const Matrix& logMel,
                                             std::size_t nCoeffs = kMfccCoeffs)
{
  if (nCoeffs > logMel.rows)
    throw ParameterError("cannot keep " + std::to_string(nCoeffs) + " of " +
                         std::to_string(logMel.rows) + " cepstral coefficients");
  std::vector<double> avg(nCoeffs, 0.0);
  std::vector<double> column(logMel.rows);
  for (std::size_t t = 0; t < logMel.cols; ++t)
  {
    for (std::size_t m = 0; m < logMel.rows; ++m) column[m] = logMel(m, t);
    auto c = dct2(column);
    for (std::size_t k = 0; k < nCoeffs; ++k) avg[k] += c[k];
  }
  for (auto& v : avg) v /= static_cast<double>(logMel.cols);
  return avg;
}

/// Reusable front end holding the FFT plan, window and filterbank.
class MelExtractor
{
public:
  explicit MelExtractor(StftSpec stft = {}, MelSpec mel = {})
      : mStft(stft), mMel(mel), mFft((stft.validate(), stft.nFft)),
        mWindow(hann_periodic(stft.nFft)), mFilterbank(mel_filterbank(mel, stft.nFft))
  {}

  const StftSpec& stft_spec() const noexcept { return mStft; }
  const Matrix& filterbank() const noexcept { return mFilterbank; }

  ComplexSpectrogram stft(std::span<const double> window)
  {
    if (window.size() < mStft.nFft)
      throw LengthError("window of " + std::to_string(window.size()) +
                        " samples is shorter than n_fft = " + std::to_string(mStft.nFft));
    ComplexSpectrogram s;
    s.bins = mStft.bins();
    s.frames = mStft.frames(window.size());
    s.data.resize(s.bins * s.frames);
    std::vector<double> frame(mStft.nFft);
    std::vector<std::complex<double>> spectrum(s.bins);
    for (std::size_t t = 0; t < s.frames; ++t)
    {
      for (std::size_t i = 0; i < mStft.nFft; ++i)
        frame[i] = window[t * mStft.hop + i] * mWindow[i];
      mFft.forward(frame, spectrum);
      for (std::size_t k = 0; k < s.bins; ++k) s.data[k * s.frames + t] = spectrum[k];
    }
    return s;
  }

  /// Filterbank energies of the power spectrum, before the log.
  Matrix mel_power(std::span<const double> window)
  {
    const auto s = stft(window);
    Matrix out(mFilterbank.rows, s.frames);
    for (std::size_t m = 0; m < mFilterbank.rows; ++m)
      for (std::size_t k = 0; k < s.bins; ++k)
      {
        const double w = mFilterbank(m, k);
        if (w == 0.0) continue;
        for (std::size_t t = 0; t < s.frames; ++t) out(m, t) += w * std::norm(s(k, t));
      }
    return out;
  }

  Matrix log_mel(std::span<const double> window)
  {
    Matrix out = mel_power(window);
    for (auto& v : out.data) v = std::log(v + kLogFloor);
    return out;
  }

  Matrix mel_spectrogram(std::span<const double> window)
  {
    return normalize_mel(log_mel(window));
  }

  std::vector<double> mfcc(std::span<const double> window, std::size_t nCoeffs = kMfccCoeffs)
  {
    return mfcc_from_log_mel(log_mel(window), nCoeffs);
  }

private:
  StftSpec mStft;
  MelSpec mMel;
  RealFft mFft;
  std::vector<double> mWindow;
  Matrix mFilterbank;
};

inline ComplexSpectrogram stft(std::span<const double> window, const StftSpec& spec = {})
{
  spec.validate();
  if (window.size() < spec.nFft)
    throw LengthError("window of " + std::to_string(window.size()) +
                      " samples is shorter than n_fft = " + std::to_string(spec.nFft));
  MelExtractor ex(spec);
  return ex.stft(window);
}

/// Normalized 64 x 7 log-mel spectrogram of a 661-sample window.
inline Matrix mel_spectrogram(std::span<const double> window, const StftSpec& spec = {})
{
  MelExtractor ex(spec);
  return ex.mel_spectrogram(window);
}

inline std::vector<double> mfcc(std::span<const double> window, const StftSpec& spec = {},
                                std::size_t nCoeffs = kMfccCoeffs)
{
  MelExtractor ex(spec);
  return ex.mfcc(window, nCoeffs);
}

// ---------------------------------------------------------------------------
// TTFE1 feature container
//
//   "TTFE1"
//   repeated: u32 LE record length (bytes that follow, always 1794)
//             i8 surface id, i8 spin id (-1 = none)
//             448 x f32 LE log-mel cells, row-major band x frame
//
// Cells hold the log-mel values before per-window normalization, so readers
// can derive both the normalized spectrogram and the MFCCs.

struct FeatureRecord
{
  std::int8_t surface{-1};
  std::int8_t spin{-1};
  Matrix logMel{kMelBands, kMelFrames};
};

inline constexpr char kFeatureMagic[5] = {'T', 'T', 'F', 'E', '1'};
inline constexpr std::uint32_t kFeatureRecordBytes = 2 + 4 * kMelCells;

inline std::string encode_features(std::span<const FeatureRecord> records)
{
  std::string out(kFeatureMagic, sizeof kFeatureMagic);
  out.reserve(out.size() + records.size() * (4 + kFeatureRecordBytes));
  for (const auto& r : records)
  {
    if (r.logMel.rows != kMelBands || r.logMel.cols != kMelFrames)
      throw ShapeError("feature record must be 64 x 7");
    detail::put32(out, kFeatureRecordBytes);
    out.push_back(static_cast<char>(r.surface));
    out.push_back(static_cast<char>(r.spin));
    for (double v : r.logMel.data)
    {
      const float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, sizeof bits);
      detail::put32(out, bits);
    }
  }
  return out;
}

inline std::vector<FeatureRecord> decode_features(std::span<const std::uint8_t> bytes,
                                                  const std::string& name = "<memory>")
{
  if (bytes.size() < sizeof kFeatureMagic ||
      std::memcmp(bytes.data(), kFeatureMagic, sizeof kFeatureMagic) != 0)
    throw FormatError("'" + name + "' is not a TTFE1 feature file");
  std::vector<FeatureRecord> out;
  std::size_t pos = sizeof kFeatureMagic;
  while (pos < bytes.size())
  {
    if (pos + 4 > bytes.size())
      throw FormatError("'" + name + "': truncated record header");
    const std::uint32_t len = detail::le32(bytes.data() + pos);
    if (len != kFeatureRecordBytes)
      throw FormatError("'" + name + "': record " + std::to_string(out.size()) +
                        " has length " + std::to_string(len) + ", expected " +
                        std::to_string(kFeatureRecordBytes));
    pos += 4;
    if (pos + len > bytes.size())
      throw FormatError("'" + name + "': truncated record " + std::to_string(out.size()));
    FeatureRecord r;
    r.surface = static_cast<std::int8_t>(bytes[pos]);
    r.spin = static_cast<std::int8_t>(bytes[pos + 1]);
    for (std::size_t i = 0; i < kMelCells; ++i)
    {
      std::uint32_t bits = detail::le32(bytes.data() + pos + 2 + 4 * i);
      float f;
      std::memcpy(&f, &bits, sizeof f);
      r.logMel.data[i] = f;
    }
    pos += len;
    out.push_back(std::move(r));
  }
  return out;
}

inline void write_features(const std::filesystem::path& path,
                           std::span<const FeatureRecord> records)
{
  write_file(path, encode_features(records));
}

inline std::vector<FeatureRecord> read_features(const std::filesystem::path& path)
{
  auto bytes = detail::read_file(path);
  return decode_features(bytes, path.string());
}

} // namespace ttsound
