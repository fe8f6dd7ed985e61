#pragma once

#include <string>

namespace epopt {

// Shortest representation that round-trips to the same double.
std::string format_double(double value);

}  // namespace epopt
