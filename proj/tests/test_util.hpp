#pragma once

// Shared helpers for the test suites.

#include <ttsound/audio_io.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace ttsound::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir
{
public:
  TempDir()
  {
    static std::mt19937_64 rng(std::random_device{}());
    mPath = std::filesystem::temp_directory_path() /
            ("ttsound-test-" + std::to_string(rng()));
    std::filesystem::create_directories(mPath);
  }
  ~TempDir()
  {
    std::error_code ec;
    std::filesystem::remove_all(mPath, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return mPath; }
  std::filesystem::path operator/(const std::string& name) const { return mPath / name; }

private:
  std::filesystem::path mPath;
};

/// Raw RIFF/WAVE bytes with arbitrary format fields; `data` is the payload.
inline std::string raw_wav(int format, int channels, int rate, int bits,
                           const std::string& data)
{
  std::string out = "RIFF";
  detail::put32(out, static_cast<std::uint32_t>(36 + data.size()));
  out += "WAVEfmt ";
  detail::put32(out, 16);
  detail::put16(out, static_cast<std::uint16_t>(format));
  detail::put16(out, static_cast<std::uint16_t>(channels));
  detail::put32(out, static_cast<std::uint32_t>(rate));
  detail::put32(out, static_cast<std::uint32_t>(rate * channels * bits / 8));
  detail::put16(out, static_cast<std::uint16_t>(channels * bits / 8));
  detail::put16(out, static_cast<std::uint16_t>(bits));
  out += "data";
  detail::put32(out, static_cast<std::uint32_t>(data.size()));
  out += data;
  return out;
}

inline std::string pcm16_payload(const std::vector<std::int16_t>& samples)
{
  std::string out;
  for (auto s : samples) detail::put16(out, static_cast<std::uint16_t>(s));
  return out;
}

inline std::string read_bytes(const std::filesystem::path& p)
{
  auto v = detail::read_file(p);
  return {v.begin(), v.end()};
}

/// Root of an optional local copy of the public dataset (manifest path).
inline const char* dataset_manifest() { return std::getenv("TTSOUND_DATASET_MANIFEST"); }

} // namespace ttsound::testing
