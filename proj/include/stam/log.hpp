// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <string_view>

namespace stam {

using WarningSink = std::function<void(std::string_view)>;

// Emits a non-fatal diagnostic. Defaults to stderr.
void warn(std::string_view message);

// Replaces the warning sink, returning the previous one. Passing an empty
// function restores the stderr default.
WarningSink set_warning_sink(WarningSink sink);

}  // namespace stam
