#pragma once

namespace legalrag {

inline constexpr const char* kVersion = "0.1.0";

} // namespace legalrag
