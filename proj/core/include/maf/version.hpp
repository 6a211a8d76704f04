#pragma once

namespace maf {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace maf
