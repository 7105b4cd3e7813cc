#pragma once

#include <functional>
#include <iostream>
#include <string>

namespace latentcast {

/// Minimal warning sink. Training runs redirect this into the run record;
/// the default prints to stderr.
inline std::function<void(const std::string&)>& warn_handler() {
    static std::function<void(const std::string&)> h = [](const std::string& msg) {
        std::cerr << "[warn] " << msg << "\n";
    };
    return h;
}

inline void log_warn(const std::string& msg) { warn_handler()(msg); }

}  // namespace latentcast
