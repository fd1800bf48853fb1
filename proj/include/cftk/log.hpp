#pragma once

#include <functional>
#include <string>

namespace cftk {

// Non-fatal diagnostics. Default sink writes "warning: ..." to stderr.
using WarningSink = std::function<void(const std::string&)>;
void warn(const std::string& message);
// Returns the previous sink. Passing nullptr restores the default.
WarningSink set_warning_sink(WarningSink sink);

}  // namespace cftk

namespace cftk {

// Raises glibc's mmap/trim thresholds so the tape's short-lived buffers are
// recycled instead of being returned to the kernel after every op. No-op on
// other C libraries.
void tune_allocator();

}  // namespace cftk
