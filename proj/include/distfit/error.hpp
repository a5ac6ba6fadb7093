#pragma once

#include <stdexcept>
#include <string>

namespace distfit {

/// Error categories map onto CLI exit codes.
enum class ErrorCategory { config = 2, data = 3, numerical = 4 };

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what, std::string hint = {})
        : std::runtime_error(what), category_(category), hint_(std::move(hint)) {}

    ErrorCategory category() const noexcept { return category_; }
    const std::string& hint() const noexcept { return hint_; }
    int exit_code() const noexcept { return static_cast<int>(category_); }

private:
    ErrorCategory category_;
    std::string hint_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what, std::string hint = {})
        : Error(ErrorCategory::config, what, std::move(hint)) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what, std::string hint = {})
        : Error(ErrorCategory::data, what, std::move(hint)) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what, std::string hint = {})
        : Error(ErrorCategory::numerical, what, std::move(hint)) {}
};

/// Builds "file:line: field: message" for data errors.
inline std::string located(const std::string& file, std::size_t line, const std::string& field,
                           const std::string& message) {
    std::string out = file;
    if (line > 0) out += ":" + std::to_string(line);
    if (!field.empty()) out += ": " + field;
    return out + ": " + message;
}

}  // namespace distfit
