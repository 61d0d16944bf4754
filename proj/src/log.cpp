#include "affect/log.hpp"

#include <iostream>

namespace affect {

void log_warn(const std::string& message) { std::cerr << "[warn] " << message << "\n"; }

}  // namespace affect
