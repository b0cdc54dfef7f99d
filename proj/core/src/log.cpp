#include "hybridgrid/log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>

namespace hybridgrid {

namespace {

LogLevel parse_level() {
    const char* env = std::getenv("HYBRIDGRID_LOG");
    if (!env) return LogLevel::Warn;
    std::string s(env);
    if (s == "error") return LogLevel::Error;
    if (s == "warn") return LogLevel::Warn;
    if (s == "info") return LogLevel::Info;
    if (s == "debug") return LogLevel::Debug;
    return LogLevel::Warn;
}

const char* tag(LogLevel l) {
    switch (l) {
        case LogLevel::Error: return "error";
        case LogLevel::Warn: return "warn";
        case LogLevel::Info: return "info";
        case LogLevel::Debug: return "debug";
    }
    return "?";
}

std::mutex g_mutex;

} // namespace

LogLevel log_level() {
    static const LogLevel level = parse_level();
    return level;
}

void log(LogLevel level, const std::string& msg) {
    if (static_cast<int>(level) > static_cast<int>(log_level())) return;
    std::lock_guard<std::mutex> lock(g_mutex);
    std::cerr << "[hybridgrid:" << tag(level) << "] " << msg << "\n";
}

} // namespace hybridgrid
