#pragma once

#include <string>

// Thin logging facade. The backend lives in its own translation unit because
// libtorch ships a bundled fmt that clashes with the one spdlog is built on.
namespace taskmri::log {

enum class Level { Debug, Info, Warn, Error };

void set_level(Level level);
void write(Level level, const std::string& message);

inline void debug(const std::string& message) { write(Level::Debug, message); }
inline void info(const std::string& message) { write(Level::Info, message); }
inline void warn(const std::string& message) { write(Level::Warn, message); }
inline void error(const std::string& message) { write(Level::Error, message); }

}  // namespace taskmri::log
