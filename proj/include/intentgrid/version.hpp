#pragma once

namespace intentgrid {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kProtocolVersion = "intentgrid-session/1";

}  // namespace intentgrid
