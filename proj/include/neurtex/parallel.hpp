// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace neurtex {

/// Thread cap for OpenMP kernels. Reads NEURTEX_THREADS once; an explicit
/// set_thread_count() overrides it (tests pin 1 for bit-reproducibility).
int thread_count();
void set_thread_count(int n);

}  // namespace neurtex
