#pragma once

namespace sft {

// Stderr logging gated by SFT_LOG in {error, info, debug}; default info.
enum class LogLevel { error = 0, info = 1, debug = 2 };

LogLevel log_level();

void log_error(const char* fmt, ...);
void log_info(const char* fmt, ...);
void log_debug(const char* fmt, ...);

}  // namespace sft
