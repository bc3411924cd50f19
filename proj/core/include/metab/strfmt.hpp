#pragma once

#include <string>

namespace metab {

// Shortest round-trip decimal form of a double (to_chars); "inf"/"nan"
// spelled out. Used for all CSV emission so serialize->parse is exact.
std::string dtos(double v);

}  // namespace metab
