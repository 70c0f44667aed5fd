// Copyright (c) 2026 the patternid authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace patternid {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace patternid
