#include "dfms/log.hpp"

#include <spdlog/spdlog.h>

#include "dfms/error.hpp"

namespace dfms::log {

void set_level(std::string_view level) {
  const auto parsed = spdlog::level::from_str(std::string(level));
  if (parsed == spdlog::level::off && level != "off") throw ValidationError("unknown log level '" + std::string(level) + "'");
  spdlog::set_level(parsed);
}

void info(const std::string& message) { spdlog::info("{}", message); }
void warn(const std::string& message) { spdlog::warn("{}", message); }
void error(const std::string& message) { spdlog::error("{}", message); }

}  // namespace dfms::log
