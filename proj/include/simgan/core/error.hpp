#pragma once

#include <stdexcept>
#include <string>

namespace simgan {

/// Caller supplied data that violates an operation's precondition.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A configuration (plan, config file, dataset composition) cannot be honoured.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Datasets that must be disjoint share content.
class ValidationError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// A required upstream artifact is missing.
class DependencyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical routine was handed data outside its domain.
class NumericDomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// An embedding with zero norm was produced where a direction is required.
class DegenerateEmbedding : public NumericDomainError {
public:
    using NumericDomainError::NumericDomainError;
};

} // namespace simgan
