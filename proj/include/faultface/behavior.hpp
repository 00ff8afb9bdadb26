#pragma once
#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace faultface {

/// Operating condition of the bearing. The enumerator order is the class index
/// used by every network output and confusion matrix.
enum class BehaviorClass : int {
  Nominal = 0,
  Ball = 1,
  InnerRace = 2,
  LoadCenter = 3,
  LoadOpposite = 4,
  LoadOrthogonal = 5,
};

inline constexpr std::size_t kNumClasses = 6;

inline constexpr std::array<BehaviorClass, kNumClasses> kAllClasses = {
    BehaviorClass::Nominal,    BehaviorClass::Ball,         BehaviorClass::InnerRace,
    BehaviorClass::LoadCenter, BehaviorClass::LoadOpposite, BehaviorClass::LoadOrthogonal};

inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "Nominal", "Ball", "InnerRace", "LoadCenter", "LoadOpposite", "LoadOrthogonal"};

constexpr std::size_t index_of(BehaviorClass c) { return static_cast<std::size_t>(c); }
constexpr BehaviorClass class_at(std::size_t i) { return kAllClasses.at(i); }
constexpr std::string_view name_of(BehaviorClass c) { return kClassNames[index_of(c)]; }

inline std::optional<BehaviorClass> parse_class(std::string_view s) {
  for (std::size_t i = 0; i < kNumClasses; ++i)
    if (kClassNames[i] == s) return kAllClasses[i];
  return std::nullopt;
}

enum class BearingEnd { FanEnd, DriveEnd };

inline std::string_view name_of(BearingEnd e) { return e == BearingEnd::FanEnd ? "FanEnd" : "DriveEnd"; }

inline std::optional<BearingEnd> parse_bearing_end(std::string_view s) {
  if (s == "FanEnd") return BearingEnd::FanEnd;
  if (s == "DriveEnd") return BearingEnd::DriveEnd;
  return std::nullopt;
}

}  // namespace faultface
