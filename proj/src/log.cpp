// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#include "stam/log.hpp"

#include <iostream>
#include <mutex>
#include <utility>

namespace stam {
namespace {

std::mutex g_sink_mutex;
WarningSink g_sink;

}  // namespace

void warn(std::string_view message) {
  std::lock_guard lock(g_sink_mutex);
  if (g_sink) {
    g_sink(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

WarningSink set_warning_sink(WarningSink sink) {
  std::lock_guard lock(g_sink_mutex);
  return std::exchange(g_sink, std::move(sink));
}

}  // namespace stam
