#pragma once

#include <iostream>
#include <mutex>
#include <string_view>

namespace cohertrace::detail {

inline void warn(std::string_view message) {
  static std::mutex mutex;
  std::lock_guard lock(mutex);
  std::cerr << "cohertrace: warning: " << message << '\n';
}

}  // namespace cohertrace::detail
