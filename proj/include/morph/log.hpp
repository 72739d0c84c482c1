#pragma once

#include <spdlog/logger.h>

#include <memory>

namespace morph {

/// Shared stderr logger. Level comes from MORPHPLAN_LOG (error, warn, info,
/// debug); default warn.
spdlog::logger& logger();

}  // namespace morph
