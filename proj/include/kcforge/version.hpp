#pragma once

#define KCFORGE_VERSION "0.1.0"

namespace kcforge {

inline constexpr const char* kVersion = KCFORGE_VERSION;

}  // namespace kcforge
