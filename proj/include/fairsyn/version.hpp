#pragma once

namespace fairsyn {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace fairsyn
