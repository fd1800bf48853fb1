#include "cftk/log.hpp"

#include <iostream>

namespace cftk {

namespace {
WarningSink& sink() {
  static WarningSink s;
  return s;
}
}  // namespace

void warn(const std::string& message) {
  if (sink()) sink()(message);
  else std::cerr << "warning: " << message << '\n';
}

WarningSink set_warning_sink(WarningSink s) {
  WarningSink old = sink();
  sink() = std::move(s);
  return old;
}

}  // namespace cftk

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace cftk {

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

}  // namespace cftk
