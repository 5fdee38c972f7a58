#pragma once

#include <stdexcept>
#include <string>

namespace tilq {

/// Broad failure categories. The CLI maps each one onto a stable exit code.
enum class ErrorCategory {
    config,
    assumption_violation,
    numerical,
    inconclusive_verification,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

class AssumptionViolation : public Error {
public:
    explicit AssumptionViolation(const std::string& what)
        : Error(ErrorCategory::assumption_violation, what) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(ErrorCategory::numerical, what) {}
};

}  // namespace tilq
