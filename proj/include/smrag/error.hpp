#pragma once

#include <stdexcept>
#include <string>

namespace smrag {

/// Failure classes. The CLI maps them onto exit codes 2..5.
enum class ErrorKind { usage, data, backend, internal };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class DataError : public Error {
public:
    explicit DataError(const std::string& message) : Error(ErrorKind::data, message) {}
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& message) : Error(ErrorKind::usage, message) {}
};

const char* to_string(ErrorKind kind) noexcept;

}  // namespace smrag
