#pragma once

#include <string>

namespace affect {

/// Writes "[warn] <message>" to stderr. Single sink keeps test output and CLI
/// diagnostics in one place.
void log_warn(const std::string& message);

}  // namespace affect
