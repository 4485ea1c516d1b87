#include "lebench/log.hpp"

#include <spdlog/spdlog.h>

#include <atomic>

namespace lebench {

namespace {
std::atomic<std::size_t> g_warnings{0};
std::atomic<bool> g_quiet{false};
}  // namespace

void warn(const std::string& message) {
    ++g_warnings;
    if (!g_quiet) spdlog::warn("{}", message);
}

void info(const std::string& message) {
    if (!g_quiet) spdlog::info("{}", message);
}

std::size_t warning_count() { return g_warnings.load(); }

void set_quiet(bool quiet) { g_quiet = quiet; }

}  // namespace lebench
