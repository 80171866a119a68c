#pragma once

#include <stdexcept>
#include <string>

namespace cmvrp {

// Invalid configuration or document content. CLI exit code 2.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed document; the message names the offending field.
class ParseError : public ValidationError {
public:
    ParseError(const std::string& field, const std::string& what)
        : ValidationError(field + ": " + what), field_(field) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

// File system failures. CLI exit code 3.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A caller broke an operation's precondition. CLI exit code 4.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// A NaN or infinity escaped a numeric kernel.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace cmvrp
