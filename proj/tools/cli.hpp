// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0
//
// The `cmae` command line. Exit codes: 0 success, 1 usage or configuration
// error, 2 data error, 3 numeric failure.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cmae::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cmae::cli
