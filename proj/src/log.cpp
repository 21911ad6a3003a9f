#include "isoword/log.hpp"

#include <cstdlib>
#include <memory>
#include <string_view>

#include <spdlog/sinks/stdout_sinks.h>

namespace isoword {

namespace {

spdlog::level::level_enum level_from_env() {
  const char* raw = std::getenv("ISOWORD_LOG");
  if (raw == nullptr) return spdlog::level::info;
  const std::string_view value(raw);
  if (value == "error") return spdlog::level::err;
  if (value == "debug") return spdlog::level::debug;
  return spdlog::level::info;
}

}  // namespace

spdlog::logger& logger() {
  static const std::shared_ptr<spdlog::logger> instance = [] {
    auto sink = std::make_shared<spdlog::sinks::stderr_sink_mt>();
    auto log = std::make_shared<spdlog::logger>("isoword", sink);
    log->set_pattern("[%l] %v");
    log->set_level(level_from_env());
    return log;
  }();
  return *instance;
}

}  // namespace isoword
