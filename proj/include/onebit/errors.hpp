#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace onebit {

/// Argument outside the mathematical domain of a function.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Malformed or truncated binary file. `offset` is the byte position where
/// parsing failed.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class BudgetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Supervision quota exhausted by a query.
class QuotaError : public BudgetError {
public:
    using BudgetError::BudgetError;
};

/// Violation of the annotation protocol (re-query, query of a labeled sample).
class ProtocolError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class TrainingError : public std::runtime_error {
public:
    TrainingError(const std::string& what, std::size_t batch_index)
        : std::runtime_error(what + " (batch " + std::to_string(batch_index) + ")"),
          batch_index_(batch_index) {}

    std::size_t batch_index() const noexcept { return batch_index_; }

private:
    std::size_t batch_index_;
};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid experiment configuration. `pointer` is a JSON pointer to the
/// offending key ("" for the document root).
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& pointer, const std::string& what)
        : std::runtime_error(pointer.empty() ? what : pointer + ": " + what), pointer_(pointer) {}

    const std::string& pointer() const noexcept { return pointer_; }

private:
    std::string pointer_;
};

}  // namespace onebit
