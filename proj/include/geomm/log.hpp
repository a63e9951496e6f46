#pragma once

#include <functional>
#include <string>
#include <string_view>

namespace geomm {

using WarningSink = std::function<void(std::string_view)>;

// Routes library warnings. The default sink writes "warning: <msg>" to stderr.
// Returns the previously installed sink.
WarningSink set_warning_sink(WarningSink sink);

void warn(std::string_view message);

// Installs a sink for the lifetime of the object, restoring the old one on destruction.
class ScopedWarningSink {
 public:
  explicit ScopedWarningSink(WarningSink sink) : previous_(set_warning_sink(std::move(sink))) {}
  ~ScopedWarningSink() { set_warning_sink(std::move(previous_)); }
  ScopedWarningSink(const ScopedWarningSink&) = delete;
  ScopedWarningSink& operator=(const ScopedWarningSink&) = delete;

 private:
  WarningSink previous_;
};

}  // namespace geomm
