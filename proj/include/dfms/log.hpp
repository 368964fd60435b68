#pragma once

#include <string>
#include <string_view>

namespace dfms::log {

/// Levels: trace, debug, info, warn, error, off.
void set_level(std::string_view level);
void info(const std::string& message);
void warn(const std::string& message);
void error(const std::string& message);

}  // namespace dfms::log
