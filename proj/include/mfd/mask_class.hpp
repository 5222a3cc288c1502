#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace mfd {

// Category ordinals are also the network's output indices.
enum class MaskClass : std::uint8_t { CorrectMask = 0, IncorrectMask = 1, WithoutMask = 2 };

inline constexpr std::size_t kNumClasses = 3;

inline constexpr std::array<MaskClass, kNumClasses> kAllClasses{
    MaskClass::CorrectMask, MaskClass::IncorrectMask, MaskClass::WithoutMask};

struct Rgb {
  std::uint8_t r, g, b;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr std::size_t ordinal(MaskClass c) { return static_cast<std::size_t>(c); }

inline MaskClass class_from_ordinal(std::size_t i) { return kAllClasses.at(i); }

// Directory / report names.
inline constexpr std::string_view class_name(MaskClass c) {
  switch (c) {
    case MaskClass::CorrectMask: return "correct_mask";
    case MaskClass::IncorrectMask: return "incorrect_mask";
    case MaskClass::WithoutMask: return "without_mask";
  }
  return "";
}

inline std::optional<MaskClass> class_from_name(std::string_view name) {
  for (auto c : kAllClasses)
    if (class_name(c) == name) return c;
  return std::nullopt;
}

// Annotation color: green, blue, red.
inline constexpr Rgb class_color(MaskClass c) {
  switch (c) {
    case MaskClass::CorrectMask: return {0, 255, 0};
    case MaskClass::IncorrectMask: return {0, 0, 255};
    case MaskClass::WithoutMask: return {255, 0, 0};
  }
  return {0, 0, 0};
}

}  // namespace mfd
