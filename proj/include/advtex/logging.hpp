#pragma once

#include <functional>
#include <iostream>
#include <string_view>

namespace advtex {

using LogSink = std::function<void(std::string_view)>;

/// Destination for library warnings. Replace (or set to an empty function)
/// to redirect or silence them.
inline LogSink& warning_sink() {
  static LogSink sink = [](std::string_view msg) { std::cerr << "[advtex] warning: " << msg << '\n'; };
  return sink;
}

inline void log_warning(std::string_view msg) {
  if (auto& sink = warning_sink()) sink(msg);
}

}  // namespace advtex
