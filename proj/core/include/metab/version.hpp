#pragma once

namespace metab {

inline constexpr const char* kVersion = "0.1.0";

}
