#pragma once

#include "error.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace ttsound {

/// Impact surface. Ids are dense and 0-based: rackets 1..10 map to 0..9,
/// then table = 10, floor = 11, other = 12.
enum class SurfaceClass : std::int8_t
{
  Racket01 = 0,
  Racket02,
  Racket03,
  Racket04,
  Racket05,
  Racket06,
  Racket07,
  Racket08,
  Racket09,
  Racket10,
  Table,
  Floor,
  Other,
};

/// Spin applied at racket contact: back = 0, flat = 1, top = 2.
enum class SpinClass : std::int8_t
{
  Back = 0,
  Flat,
  Top,
};

enum class Task : std::uint8_t
{
  Surface = 0,
  Spin = 1,
};

inline constexpr int kNumSurfaceClasses = 13;
inline constexpr int kNumSpinClasses = 3;
inline constexpr int kNumRackets = 10;

namespace detail {
inline constexpr std::array<std::string_view, kNumSurfaceClasses> kSurfaceNames{
    "racket_01", "racket_02", "racket_03", "racket_04", "racket_05",
    "racket_06", "racket_07", "racket_08", "racket_09", "racket_10",
    "table",     "floor",     "other"};
inline constexpr std::array<std::string_view, kNumSpinClasses> kSpinNames{
    "back", "flat", "top"};
} // namespace detail

inline constexpr int id(SurfaceClass s) { return static_cast<int>(s); }
inline constexpr int id(SpinClass s) { return static_cast<int>(s); }

inline constexpr bool is_racket(SurfaceClass s)
{
  return id(s) < kNumRackets;
}

inline std::string_view to_string(SurfaceClass s)
{
  return detail::kSurfaceNames[static_cast<std::size_t>(id(s))];
}

inline std::string_view to_string(SpinClass s)
{
  return detail::kSpinNames[static_cast<std::size_t>(id(s))];
}

inline std::string_view to_string(Task t)
{
  return t == Task::Surface ? "surface" : "spin";
}

inline std::optional<SurfaceClass> parse_surface(std::string_view s)
{
  for (std::size_t i = 0; i < detail::kSurfaceNames.size(); ++i)
    if (detail::kSurfaceNames[i] == s) return static_cast<SurfaceClass>(i);
  return std::nullopt;
}

inline std::optional<SpinClass> parse_spin(std::string_view s)
{
  for (std::size_t i = 0; i < detail::kSpinNames.size(); ++i)
    if (detail::kSpinNames[i] == s) return static_cast<SpinClass>(i);
  return std::nullopt;
}

inline std::optional<Task> parse_task(std::string_view s)
{
  if (s == "surface") return Task::Surface;
  if (s == "spin") return Task::Spin;
  return std::nullopt;
}

inline int num_classes(Task t)
{
  return t == Task::Surface ? kNumSurfaceClasses : kNumSpinClasses;
}

/// Human-readable name of label `label_id` within a task.
inline std::string label_name(Task t, int label_id)
{
  if (label_id < 0 || label_id >= num_classes(t))
    throw ValidationError("label id " + std::to_string(label_id) +
                          " out of range for task " +
                          std::string(to_string(t)));
  return t == Task::Surface
             ? std::string(to_string(static_cast<SurfaceClass>(label_id)))
             : std::string(to_string(static_cast<SpinClass>(label_id)));
}

} // namespace ttsound
