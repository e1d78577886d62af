#pragma once

#include <functional>
#include <string>

namespace egospeed {

using WarningSink = std::function<void(const std::string&)>;

// Replaces the process-wide warning sink (stderr by default). Returns the
// previous sink.
WarningSink set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace egospeed
