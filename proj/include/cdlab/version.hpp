#pragma once

namespace cdlab {

inline constexpr const char* version = "0.1.0";

}  // namespace cdlab
