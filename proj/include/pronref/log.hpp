#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace pronref::log {

using Sink = std::function<void(std::string_view)>;

/// Installs a warning sink and returns the previous one. The default sink
/// writes "warning: <msg>" lines to stderr.
Sink set_warning_sink(Sink sink);

void warn(std::string_view message);

/// Collects warnings for the lifetime of the object (tests, CLI summaries).
class WarningCapture {
 public:
  WarningCapture();
  ~WarningCapture();
  WarningCapture(const WarningCapture&) = delete;
  WarningCapture& operator=(const WarningCapture&) = delete;

  const std::vector<std::string>& messages() const { return messages_; }
  bool contains(std::string_view needle) const;

 private:
  std::vector<std::string> messages_;
  Sink previous_;
};

}  // namespace pronref::log
