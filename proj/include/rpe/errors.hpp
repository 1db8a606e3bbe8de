// Copyright 2026 The rpe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace rpe {

/// Base class for all library errors.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or vector dimensions do not line up.
class shape_error : public error {
public:
    using error::error;
};

/// Input violates a value-domain precondition (empty set, k too large, ...).
class domain_error : public error {
public:
    using error::error;
};

/// Entry does not match the registry schema (dim / adapter signature).
class schema_error : public error {
public:
    using error::error;
};

/// Duplicate id or clashing resource.
class conflict_error : public error {
public:
    using error::error;
};

/// Malformed file contents (bad magic, truncated payload, bad JSON).
class parse_error : public error {
public:
    using error::error;
};

/// Filesystem level failure.
class io_error : public error {
public:
    using error::error;
};

/// Invalid generator / experiment configuration.
class config_error : public error {
public:
    using error::error;
};

} // namespace rpe
