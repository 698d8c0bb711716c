#pragma once

#include <string>

namespace otkd {

// Shortest round-trip decimal form; integral values keep a trailing ".0" (1 -> "1.0").
std::string format_real(double value);

}  // namespace otkd
