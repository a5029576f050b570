#pragma once

namespace nmsynth {
inline constexpr const char* kVersion = "0.1.0";
}
