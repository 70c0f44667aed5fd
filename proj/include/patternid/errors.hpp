// Copyright (c) 2026 the patternid authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace patternid {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Input file is syntactically broken (bad XML, truncated binary payload, ...).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Input file is readable but violates the expected layout: unsupported
/// format, missing mandatory element, out-of-range field.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A caller-supplied value violates a documented precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace patternid
