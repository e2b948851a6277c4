#pragma once

namespace mdpose {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace mdpose
