#pragma once

#include <cstdlib>
#include <iostream>
#include <string>

namespace sdm {

// Diagnostics go to stderr so report output stays clean. SDM_LOG=1 enables
// info, SDM_LOG=2 adds debug; unset or 0 is silent.
inline int log_level() {
  static const int level = [] {
    const char* v = std::getenv("SDM_LOG");
    if (v == nullptr || *v == '\0') return 0;
    return std::atoi(v);
  }();
  return level;
}

}  // namespace sdm

#define SDM_LOG_INFO(expr)                                  \
  do {                                                      \
    if (::sdm::log_level() >= 1) {                          \
      std::cerr << "[sdm] " << expr << '\n';                \
    }                                                       \
  } while (0)

#define SDM_LOG_DEBUG(expr)                                 \
  do {                                                      \
    if (::sdm::log_level() >= 2) {                          \
      std::cerr << "[sdm:debug] " << expr << '\n';          \
    }                                                       \
  } while (0)
