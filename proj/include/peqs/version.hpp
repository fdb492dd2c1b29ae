#pragma once

namespace peqs {

inline constexpr const char* kVersion = "peqs 1.0.0";

}  // namespace peqs
