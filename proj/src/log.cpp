#include "geomm/log.hpp"

#include <iostream>
#include <mutex>

namespace geomm {
namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

WarningSink& current_sink() {
  static WarningSink sink = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
  return sink;
}

}  // namespace

WarningSink set_warning_sink(WarningSink sink) {
  std::lock_guard<std::mutex> lock(sink_mutex());
  WarningSink previous = std::move(current_sink());
  current_sink() = sink ? std::move(sink) : [](std::string_view) {};
  return previous;
}

void warn(std::string_view message) {
  std::lock_guard<std::mutex> lock(sink_mutex());
  current_sink()(message);
}

}  // namespace geomm
