#pragma once

// Flat `key = value` configuration files. Blank lines and lines starting with
// '#' are ignored. Later assignments to the same key win.

#include "error.hpp"

#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

namespace ttsound {

class KeyValues
{
public:
  static KeyValues parse(std::istream& in, const std::string& name = "<config>")
  {
    KeyValues kv;
    std::string line;
    int row = 0;
    while (std::getline(in, line))
    {
      ++row;
      line = trimmed(line);
      if (line.empty() || line[0] == '#') continue;
      auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ParameterError(name + ":" + std::to_string(row) +
                             ": expected 'key = value'");
      auto key = trimmed(line.substr(0, eq));
      auto value = trimmed(line.substr(eq + 1));
      if (key.empty())
        throw ParameterError(name + ":" + std::to_string(row) + ": empty key");
      kv.mValues[key] = value;
    }
    return kv;
  }

  static KeyValues load(const std::filesystem::path& path)
  {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path.string() + "'");
    return parse(in, path.string());
  }

  void set(const std::string& key, const std::string& value) { mValues[key] = value; }
  bool has(const std::string& key) const { return mValues.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return mValues; }

  /// Assigns `out` from `key` when present; numeric parse errors name the key.
  template <typename T>
  bool get(const std::string& key, T& out) const
  {
    auto it = mValues.find(key);
    if (it == mValues.end()) return false;
    const std::string& s = it->second;
    if constexpr (std::is_same_v<T, std::string>)
    {
      out = s;
    }
    else if constexpr (std::is_floating_point_v<T>)
    {
      std::size_t used = 0;
      try
      {
        out = static_cast<T>(std::stod(s, &used));
      }
      catch (const std::exception&)
      {
        used = 0;
      }
      if (used == 0 || used != s.size())
        throw ParameterError("config key '" + key + "': not a number: '" + s + "'");
    }
    else
    {
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
      if (ec != std::errc() || ptr != s.data() + s.size())
        throw ParameterError("config key '" + key + "': not an integer: '" + s + "'");
    }
    return true;
  }

  /// Throws if any key is outside `known`.
  void require_known(const std::set<std::string>& known) const
  {
    for (const auto& [k, v] : mValues)
      if (known.count(k) == 0) throw ParameterError("unknown config key '" + k + "'");
  }

  std::string to_string() const
  {
    std::ostringstream out;
    for (const auto& [k, v] : mValues) out << k << " = " << v << "\n";
    return out.str();
  }

private:
  static std::string trimmed(const std::string& s)
  {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
  }

  std::map<std::string, std::string> mValues;
};

} // namespace ttsound
