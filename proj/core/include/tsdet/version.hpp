#pragma once

namespace tsdet {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace tsdet
