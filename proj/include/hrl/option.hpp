#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace hrl {

/// Sub-goal chosen by the upper level: stop at the stop-line, or follow the
/// nearest front vehicle.
enum class OptionId : std::uint8_t { SSL = 0, FFV = 1 };

inline constexpr std::size_t kOptionCount = 2;

inline constexpr std::size_t index_of(OptionId o) { return static_cast<std::size_t>(o); }
inline constexpr OptionId option_from_index(std::size_t i) { return static_cast<OptionId>(i); }
inline constexpr OptionId other(OptionId o) { return o == OptionId::SSL ? OptionId::FFV : OptionId::SSL; }

inline std::string_view to_string(OptionId o) { return o == OptionId::SSL ? "SSL" : "FFV"; }

/// Index into the acceleration table of the action level.
struct ActionId {
  std::size_t index = 0;
  bool operator==(const ActionId&) const = default;
};

}  // namespace hrl
