#pragma once

namespace summcorr {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace summcorr
