#pragma once

#include "error.hpp"
#include "labels.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace ttsound {

inline constexpr int kDatasetSampleRate = 44100;

/// Mono sample buffer with its sample rate. Immutable once built.
class AudioClip
{
public:
  AudioClip() = default;

  AudioClip(std::vector<double> samples, int sampleRate)
      : mSamples(std::move(samples)), mSampleRate(sampleRate)
  {
    if (sampleRate <= 0)
      throw ParameterError("sample rate must be positive, got " +
                           std::to_string(sampleRate));
  }

  std::span<const double> samples() const noexcept { return mSamples; }
  double operator[](std::size_t i) const { return mSamples[i]; }
  std::size_t size() const noexcept { return mSamples.size(); }
  bool empty() const noexcept { return mSamples.empty(); }
  int sample_rate() const noexcept { return mSampleRate; }
  double duration_s() const noexcept
  {
    return static_cast<double>(mSamples.size()) / mSampleRate;
  }

private:
  std::vector<double> mSamples;
  int mSampleRate{kDatasetSampleRate};
};

inline double rms(std::span<const double> x)
{
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

inline double peak(std::span<const double> x)
{
  double p = 0.0;
  for (double v : x) p = std::max(p, std::abs(v));
  return p;
}

// ---------------------------------------------------------------------------
// WAV

enum class WavEncoding
{
  Pcm16,
  Float32,
};

struct WavInfo
{
  int sampleRate{0};
  int channels{0};
  std::size_t frames{0};
  WavEncoding encoding{WavEncoding::Pcm16};
};

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint16_t le16(const std::uint8_t* p)
{
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t le32(const std::uint8_t* p)
{
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put16(std::string& out, std::uint16_t v)
{
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put32(std::string& out, std::uint32_t v)
{
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct ParsedWav
{
  WavInfo info;
  std::size_t dataOffset{0};
};

inline ParsedWav parse_wav_header(std::span<const std::uint8_t> bytes,
                                  const std::string& name)
{
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw FormatError("'" + name + "' is not a RIFF/WAVE file");

  bool haveFmt = false;
  int format = 0, channels = 0, bits = 0, blockAlign = 0;
  std::uint32_t rate = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size())
  {
    const std::uint8_t* chunk = bytes.data() + pos;
    std::size_t size = le32(chunk + 4);
    std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0)
    {
      if (size < 16 || body + size > bytes.size())
        throw FormatError("'" + name + "': truncated fmt chunk");
      const std::uint8_t* f = bytes.data() + body;
      format = le16(f);
      channels = le16(f + 2);
      rate = le32(f + 4);
      blockAlign = le16(f + 12);
      bits = le16(f + 14);
      // WAVE_FORMAT_EXTENSIBLE: the real format tag leads the subformat GUID
      if (format == 0xFFFE && size >= 40) format = le16(f + 24);
      haveFmt = true;
    }
    else if (std::memcmp(chunk, "data", 4) == 0)
    {
      if (!haveFmt) throw FormatError("'" + name + "': data chunk before fmt");
      if (channels < 1 || rate == 0)
        throw FormatError("'" + name + "': invalid fmt fields");
      WavEncoding enc;
      if (format == 1 && bits == 16)
        enc = WavEncoding::Pcm16;
      else if (format == 3 && bits == 32)
        enc = WavEncoding::Float32;
      else
        throw UnsupportedError("'" + name + "': unsupported encoding (format " +
                               std::to_string(format) + ", " +
                               std::to_string(bits) + " bits)");
      if (channels > 2)
        throw UnsupportedError("'" + name + "': " + std::to_string(channels) +
                               " channels (only mono and stereo)");
      if (blockAlign != channels * bits / 8)
        throw FormatError("'" + name + "': inconsistent block alignment");
      // Streaming writers leave bogus sizes behind; trust the file length.
      std::size_t avail = std::min(size, bytes.size() - body);
      ParsedWav out;
      out.info = {static_cast<int>(rate), channels,
                  avail / static_cast<std::size_t>(blockAlign), enc};
      out.dataOffset = body;
      if (out.info.frames == 0) throw EmptyError("'" + name + "': no audio data");
      return out;
    }
    pos = body + size + (size & 1);
  }
  throw FormatError("'" + name + "': missing " +
                    std::string(haveFmt ? "data" : "fmt") + " chunk");
}

} // namespace detail

/// Reads only what is needed to describe the stream.
inline WavInfo wav_info(const std::filesystem::path& path)
{
  auto bytes = detail::read_file(path);
  return detail::parse_wav_header(bytes, path.string()).info;
}

/// Loads PCM16 or float32 WAV, downmixing stereo by channel mean.
inline AudioClip decode_wav(std::span<const std::uint8_t> bytes,
                            const std::string& name = "<memory>")
{
  auto parsed = detail::parse_wav_header(bytes, name);
  const auto& info = parsed.info;
  const std::uint8_t* data = bytes.data() + parsed.dataOffset;
  const std::size_t ch = static_cast<std::size_t>(info.channels);

  auto sampleAt = [&](std::size_t idx) -> double {
    if (info.encoding == WavEncoding::Pcm16)
    {
      auto raw = static_cast<std::int16_t>(detail::le16(data + 2 * idx));
      return raw / 32768.0;
    }
    std::uint32_t raw = detail::le32(data + 4 * idx);
    float f;
    std::memcpy(&f, &raw, sizeof f);
    return static_cast<double>(f);
  };

  std::vector<double> mono(info.frames);
  for (std::size_t i = 0; i < info.frames; ++i)
  {
    double acc = 0.0;
    for (std::size_t c = 0; c < ch; ++c) acc += sampleAt(i * ch + c);
    mono[i] = acc / static_cast<double>(ch);
  }
  return AudioClip(std::move(mono), info.sampleRate);
}

inline AudioClip load_wav(const std::filesystem::path& path)
{
  auto bytes = detail::read_file(path);
  return decode_wav(bytes, path.string());
}

inline std::int16_t to_pcm16(double x)
{
  double scaled = std::round(x * 32768.0);
  return static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
}

/// Serializes a clip as mono PCM16 little-endian. Out-of-range samples clip.
inline std::string encode_wav_pcm16(const AudioClip& clip)
{
  if (clip.empty()) throw EmptyError("cannot write an empty clip");
  const auto dataBytes = static_cast<std::uint32_t>(clip.size() * 2);
  std::string out;
  out.reserve(44 + dataBytes);
  out += "RIFF";
  detail::put32(out, 36 + dataBytes);
  out += "WAVEfmt ";
  detail::put32(out, 16);
  detail::put16(out, 1);
  detail::put16(out, 1);
  detail::put32(out, static_cast<std::uint32_t>(clip.sample_rate()));
  detail::put32(out, static_cast<std::uint32_t>(clip.sample_rate()) * 2);
  detail::put16(out, 2);
  detail::put16(out, 16);
  out += "data";
  detail::put32(out, dataBytes);
  for (double s : clip.samples())
    detail::put16(out, static_cast<std::uint16_t>(to_pcm16(s)));
  return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("write error: cannot open '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write error: '" + path.string() + "'");
}

inline void write_wav(const std::filesystem::path& path, const AudioClip& clip)
{
  write_file(path, encode_wav_pcm16(clip));
}

// ---------------------------------------------------------------------------
// Dataset manifest
//
// CSV with header `path,onset_ms,surface,spin`. Surface labels are
// racket_01..racket_10, table, floor, other; spin is back, flat, top, or
// empty. Only racket rows may carry a spin label. Fields are not quoted, so
// paths must not contain commas.

struct ManifestEntry
{
  std::filesystem::path path; // resolved against the manifest's directory
  double onsetMs{0.0};
  SurfaceClass surface{SurfaceClass::Other};
  std::optional<SpinClass> spin;
};

struct DatasetManifest
{
  std::vector<ManifestEntry> entries;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line)
{
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline std::string trim(std::string s)
{
  auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && ws(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && ws(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

} // namespace detail

inline DatasetManifest parse_manifest(std::istream& in,
                                      const std::filesystem::path& baseDir)
{
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "path,onset_ms,surface,spin")
    throw ValidationError("manifest header must be 'path,onset_ms,surface,spin'");

  DatasetManifest manifest;
  std::size_t row = 1;
  while (std::getline(in, line))
  {
    ++row;
    line = detail::trim(line);
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    auto where = "manifest row " + std::to_string(row) + ": ";
    if (fields.size() != 4)
      throw ValidationError(where + "expected 4 fields, got " +
                            std::to_string(fields.size()));

    ManifestEntry e;
    std::filesystem::path p(detail::trim(fields[0]));
    e.path = p.is_absolute() ? p : baseDir / p;

    std::string onset = detail::trim(fields[1]);
    try
    {
      std::size_t used = 0;
      e.onsetMs = std::stod(onset, &used);
      if (used != onset.size()) throw std::invalid_argument(onset);
    }
    catch (const std::exception&)
    {
      throw ValidationError(where + "bad onset_ms '" + onset + "'");
    }
    if (!(e.onsetMs >= 0.0) || !std::isfinite(e.onsetMs))
      throw ValidationError(where + "onset_ms must be a finite value >= 0");

    auto surface = parse_surface(detail::trim(fields[2]));
    if (!surface)
      throw ValidationError(where + "unknown surface label '" +
                            detail::trim(fields[2]) + "'");
    e.surface = *surface;

    std::string spinField = detail::trim(fields[3]);
    if (!spinField.empty())
    {
      auto spin = parse_spin(spinField);
      if (!spin)
        throw ValidationError(where + "unknown spin label '" + spinField + "'");
      if (!is_racket(e.surface))
        throw ValidationError(where + "spin label on non-racket surface '" +
                              std::string(to_string(e.surface)) + "'");
      e.spin = *spin;
    }
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

/// Parses and validates a manifest: labels, file existence (all dangling
/// paths are reported together), sample rate and onset range.
inline DatasetManifest load_manifest(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  auto manifest = parse_manifest(in, path.parent_path());

  std::vector<std::string> missing;
  for (const auto& e : manifest.entries)
    if (!std::filesystem::is_regular_file(e.path)) missing.push_back(e.path.string());
  if (!missing.empty())
  {
    std::sort(missing.begin(), missing.end());
    missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
    std::string msg = "manifest references missing files:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw DanglingReferenceError(msg);
  }

  std::vector<std::pair<std::filesystem::path, WavInfo>> cache;
  for (const auto& e : manifest.entries)
  {
    auto it = std::find_if(cache.begin(), cache.end(),
                           [&](const auto& c) { return c.first == e.path; });
    if (it == cache.end())
    {
      cache.emplace_back(e.path, wav_info(e.path));
      it = std::prev(cache.end());
    }
    const WavInfo& info = it->second;
    if (info.sampleRate != kDatasetSampleRate)
      throw ValidationError("'" + e.path.string() + "' has sample rate " +
                            std::to_string(info.sampleRate) + ", expected 44100");
    double durationMs = 1000.0 * static_cast<double>(info.frames) / info.sampleRate;
    if (e.onsetMs >= durationMs)
      throw ValidationError("onset " + std::to_string(e.onsetMs) +
                            " ms lies beyond the end of '" + e.path.string() + "'");
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// Noise mixing

struct MixResult
{
  AudioClip clip;
  double noiseGain{0.0}; // g applied to the noise before summing
  double rescale{1.0};   // peak normalisation applied to the sum (1 = none)
};

/// signal + g*noise with g chosen so the mixture has the requested SNR.
/// Noise is tiled or truncated to the signal length. A sum that would clip is
/// rescaled as a whole so its peak is 1.
inline MixResult mix_noise(const AudioClip& signal, const AudioClip& noise, double snrDb)
{
  if (signal.sample_rate() != noise.sample_rate())
    throw ParameterError("mix_noise: sample rates differ (" +
                         std::to_string(signal.sample_rate()) + " vs " +
                         std::to_string(noise.sample_rate()) + ")");
  if (noise.empty()) throw DegenerateError("mix_noise: empty noise clip");

  std::vector<double> tiled(signal.size());
  for (std::size_t i = 0; i < tiled.size(); ++i) tiled[i] = noise[i % noise.size()];

  double noiseRms = rms(tiled);
  if (noiseRms == 0.0) throw DegenerateError("mix_noise: noise clip is silent");

  MixResult out;
  out.noiseGain = rms(signal.samples()) / (noiseRms * std::pow(10.0, snrDb / 20.0));
  std::vector<double> mixed(signal.size());
  for (std::size_t i = 0; i < mixed.size(); ++i)
    mixed[i] = signal[i] + out.noiseGain * tiled[i];

  double p = peak(mixed);
  if (p > 1.0)
  {
    out.rescale = 1.0 / p;
    for (double& v : mixed) v *= out.rescale;
  }
  out.clip = AudioClip(std::move(mixed), signal.sample_rate());
  return out;
}

} // namespace ttsound
