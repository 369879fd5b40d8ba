#pragma once

#include <cstdio>
#include <cstdlib>
#include <string>
#include <string_view>

namespace lsrigru::log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

/// Parses `error|warn|info|debug`; anything else yields `fallback`.
inline Level parse_level(std::string_view text, Level fallback = Level::warn) {
    if (text == "error") return Level::error;
    if (text == "warn") return Level::warn;
    if (text == "info") return Level::info;
    if (text == "debug") return Level::debug;
    return fallback;
}

inline Level& threshold() {
    static Level level = [] {
        const char* env = std::getenv("LSRIGRU_LOG");
        return env ? parse_level(env) : Level::warn;
    }();
    return level;
}

inline void emit(Level level, std::string_view msg) {
    if (static_cast<int>(level) > static_cast<int>(threshold())) return;
    static constexpr const char* names[] = {"error", "warn", "info", "debug"};
    std::fprintf(stderr, "[lsrigru %s] %.*s\n", names[static_cast<int>(level)],
                 static_cast<int>(msg.size()), msg.data());
}

inline void error(std::string_view msg) { emit(Level::error, msg); }
inline void warn(std::string_view msg) { emit(Level::warn, msg); }
inline void info(std::string_view msg) { emit(Level::info, msg); }
inline void debug(std::string_view msg) { emit(Level::debug, msg); }

}  // namespace lsrigru::log
