#pragma once

#include <atomic>
#include <cstdio>
#include <mutex>
#include <string>

namespace simgan::log {

inline std::atomic<bool>& quiet()
{
    static std::atomic<bool> q{false};
    return q;
}

inline void write(const char* level, const std::string& msg)
{
    static std::mutex m;
    if (quiet()) {
        return;
    }
    std::lock_guard lock(m);
    std::fprintf(stderr, "[%s] %s\n", level, msg.c_str());
}

inline void info(const std::string& msg) { write("info", msg); }
inline void warn(const std::string& msg) { write("warn", msg); }

} // namespace simgan::log
