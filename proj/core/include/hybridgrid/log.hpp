#pragma once

#include <string>

namespace hybridgrid {

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

/// Active verbosity, read once from the HYBRIDGRID_LOG environment variable
/// (error|warn|info|debug, default warn).
LogLevel log_level();

void log(LogLevel level, const std::string& msg);

inline void log_error(const std::string& msg) { log(LogLevel::Error, msg); }
inline void log_warn(const std::string& msg) { log(LogLevel::Warn, msg); }
inline void log_info(const std::string& msg) { log(LogLevel::Info, msg); }
inline void log_debug(const std::string& msg) { log(LogLevel::Debug, msg); }

} // namespace hybridgrid
