#pragma once

#include <string_view>

namespace nvsense {

inline constexpr std::string_view kToolName = "nvsense";
inline constexpr std::string_view kToolVersion = "0.1.0";

}  // namespace nvsense
