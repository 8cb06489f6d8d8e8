#pragma once

#include <stdexcept>
#include <string>

namespace slimda {

// Error categories map one-to-one onto CLI exit codes (see tools/slimda_cli.cpp).

/// Malformed architecture, shapes, widths or configuration documents.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// API called in a state that does not allow it (e.g. EVAL forward without BN stats).
class UsageError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// NaN/Inf produced by an operation or a loss.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A search could not produce a candidate satisfying its budget.
class SearchError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace slimda
