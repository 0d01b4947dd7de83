#pragma once

#include <cstdio>

namespace noboxlab::log {

template <typename... Args>
void warn(const char* fmt, Args... args) {
    std::fprintf(stderr, "[warn] ");
    std::fprintf(stderr, fmt, args...);
    std::fprintf(stderr, "\n");
}

inline void warn(const char* msg) {
    std::fprintf(stderr, "[warn] %s\n", msg);
}

template <typename... Args>
void info(const char* fmt, Args... args) {
    std::fprintf(stdout, fmt, args...);
    std::fprintf(stdout, "\n");
    std::fflush(stdout);
}

inline void info(const char* msg) {
    std::fprintf(stdout, "%s\n", msg);
    std::fflush(stdout);
}

}
