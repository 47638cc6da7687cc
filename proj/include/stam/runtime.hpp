// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace stam {

// Keeps large tensor buffers on the heap instead of returning them to the
// OS after every op, which otherwise dominates small-batch training with
// page faults. Process-wide; call once from main(). No-op off glibc.
void configure_allocator();

}  // namespace stam
