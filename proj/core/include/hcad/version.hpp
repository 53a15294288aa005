#pragma once

namespace hcad {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace hcad
