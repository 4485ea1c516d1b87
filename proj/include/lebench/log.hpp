#pragma once

#include <cstddef>
#include <string>

namespace lebench {

/// Emits a warning through spdlog and bumps a process-wide counter that
/// tests use to observe degraded-path handling.
void warn(const std::string& message);
void info(const std::string& message);

std::size_t warning_count();

/// Quiet mode keeps warnings counted but unprinted (used by test binaries).
void set_quiet(bool quiet);

}  // namespace lebench
