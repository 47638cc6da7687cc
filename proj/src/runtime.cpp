// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#include "stam/runtime.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace stam {

void configure_allocator() {
#if defined(__GLIBC__)
  constexpr int kLargeBytes = 1 << 30;
  mallopt(M_MMAP_THRESHOLD, kLargeBytes);
  mallopt(M_TRIM_THRESHOLD, kLargeBytes);
#endif
}

}  // namespace stam
