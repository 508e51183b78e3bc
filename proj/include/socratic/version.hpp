#pragma once

#include <string_view>

namespace socratic {

inline constexpr std::string_view kToolkitVersion = "socratic/0.1.0";

}  // namespace socratic
