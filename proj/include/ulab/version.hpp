#pragma once

namespace ulab {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace ulab
