#pragma once

#include <stdexcept>
#include <string>

namespace llie {

/// Caller passed arguments that violate an operation's contract
/// (shape mismatch, incompatible spatial dims, missing ids).
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A configuration value is out of its valid range.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Non-finite values reached a module boundary.
class CorruptStateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A loss term became NaN or infinite during training.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& term, const std::string& msg)
        : std::runtime_error(msg), term_(term) {}
    const std::string& term() const { return term_; }

private:
    std::string term_;
};

/// Checkpoint file is unreadable, corrupt, or of an unsupported version.
class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace llie
