#include "safn/common.hpp"

#include <cmath>
#include <cstdio>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace safn {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void tune_allocator_for_training() {
#ifdef __GLIBC__
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 64 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 64 * 1024 * 1024);
    return true;
  }();
  (void)done;
#endif
}

}  // namespace safn
