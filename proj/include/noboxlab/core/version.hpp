#pragma once

namespace noboxlab {

inline constexpr const char* kToolVersion = "0.1.0";

}
