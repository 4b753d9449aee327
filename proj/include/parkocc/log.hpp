#pragma once

#include <sstream>
#include <string>
#include <string_view>

namespace parkocc::log {

// Thin facade over the logging backend so that translation units which pull
// in libtorch never include the backend's fmt headers.

void info(std::string_view message);
void warn(std::string_view message);
void error(std::string_view message);
void debug(std::string_view message);

/// Silences everything below warnings. Used by tests and quiet CLI runs.
void set_quiet(bool quiet);
/// Enables debug output.
void set_verbose(bool verbose);

template <typename... Args>
std::string concat(const Args&... args) {
    std::ostringstream out;
    (out << ... << args);
    return out.str();
}

}  // namespace parkocc::log
