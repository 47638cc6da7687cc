// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <gtest/gtest.h>

#include <string>
#include <string_view>
#include <vector>

#include "stam/log.hpp"

namespace stam::testing {

// Fixture that records warnings instead of printing them.
class CaptureWarnings : public ::testing::Test {
 protected:
  void SetUp() override {
    previous_ = set_warning_sink([this](std::string_view m) { warnings_.emplace_back(m); });
  }
  void TearDown() override { set_warning_sink(previous_); }
  std::vector<std::string> warnings_;

 private:
  WarningSink previous_;
};

}  // namespace stam::testing
