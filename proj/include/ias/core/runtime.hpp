#pragma once

#include <malloc.h>

namespace ias {

// Keeps large freed blocks in the heap instead of returning them to the OS on
// every free; training allocates many short-lived buffers above the default
// mmap threshold.
inline void tune_allocator() {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
}

}  // namespace ias
