#pragma once

namespace metadapt {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace metadapt
