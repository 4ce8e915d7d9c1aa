// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <functional>
#include <iostream>
#include <mutex>
#include <string>

namespace csiloc {

enum class LogLevel { Debug = 0, Info = 1, Warning = 2, Error = 3, Off = 4 };

namespace detail {
struct LogState {
    std::atomic<LogLevel> level{LogLevel::Warning};
    std::mutex mutex;
    std::function<void(LogLevel, const std::string&)> sink;
};
inline LogState& log_state() {
    static LogState state;
    return state;
}
}  // namespace detail

inline void set_log_level(LogLevel level) { detail::log_state().level = level; }

/// Replace the default stderr sink (used by tests to capture messages).
inline void set_log_sink(std::function<void(LogLevel, const std::string&)> sink) {
    auto& st = detail::log_state();
    std::lock_guard lock(st.mutex);
    st.sink = std::move(sink);
}

inline void log(LogLevel level, const std::string& message) {
    auto& st = detail::log_state();
    if (level < st.level.load()) return;
    std::lock_guard lock(st.mutex);
    if (st.sink) {
        st.sink(level, message);
        return;
    }
    static constexpr const char* names[] = {"debug", "info", "warning", "error"};
    std::cerr << "[csiloc " << names[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace csiloc
