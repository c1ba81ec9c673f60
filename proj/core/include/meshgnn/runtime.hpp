#pragma once

namespace meshgnn {

// Keeps large tensor allocations on the heap instead of fresh mmap'd pages.
// Training allocates and frees many ~0.5 MB buffers per step, and the default
// glibc policy turns each of them into page faults. Call once at program
// start; a no-op on other C libraries.
void configure_allocator();

}  // namespace meshgnn
