#pragma once

#include <stdexcept>
#include <string>

namespace shipfreq {

/// Bad input: parameters outside their domain, malformed files, unknown names.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical routine failed to reach its tolerance.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the domain of a mathematical function.
class DomainError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

}  // namespace shipfreq
