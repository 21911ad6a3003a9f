#pragma once

#include <spdlog/logger.h>

namespace isoword {

// Shared stderr logger. Level comes from ISOWORD_LOG (error, info, debug);
// unset or unrecognized values mean info.
spdlog::logger& logger();

}  // namespace isoword
