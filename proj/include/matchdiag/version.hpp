#pragma once

namespace matchdiag {
inline constexpr const char* kVersion = "0.1.0";
}
