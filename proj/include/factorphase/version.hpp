#pragma once

namespace factorphase {

inline constexpr const char* kVersion = "factorphase 0.1.0";

}  // namespace factorphase
