#pragma once

#include <string>

namespace e2w {

// Shortest decimal representation that round-trips the double exactly.
std::string format_shortest(double v);

// 12 significant digits ("%.12g"); the wire format for score outputs.
std::string format_sig12(double v);

}  // namespace e2w
