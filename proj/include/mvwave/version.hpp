#pragma once

namespace mvwave {

inline constexpr const char* version() { return "0.1.0"; }

}  // namespace mvwave
