#include "morph/log.hpp"

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <string>

namespace morph {

namespace {

spdlog::level::level_enum level_from_env() {
  const char* env = std::getenv("MORPHPLAN_LOG");
  if (env == nullptr) return spdlog::level::warn;
  const std::string v(env);
  if (v == "error") return spdlog::level::err;
  if (v == "info") return spdlog::level::info;
  if (v == "debug") return spdlog::level::debug;
  return spdlog::level::warn;
}

std::shared_ptr<spdlog::logger> make_logger() {
  auto sink = std::make_shared<spdlog::sinks::stderr_sink_mt>();
  auto log = std::make_shared<spdlog::logger>("morphplan", sink);
  log->set_level(level_from_env());
  log->set_pattern("[%l] %v");
  return log;
}

}  // namespace

spdlog::logger& logger() {
  static const std::shared_ptr<spdlog::logger> instance = make_logger();
  return *instance;
}

}  // namespace morph
