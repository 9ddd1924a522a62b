#pragma once

#include <stdexcept>
#include <string>

namespace finctx {

// Error taxonomy shared by all modules. The CLI maps categories to exit
// codes: usage -> 1, data -> 2, numeric -> 3.
enum class ErrorKind {
    Usage,
    Config,
    Data,
    Numeric,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct UsageError : Error {
    explicit UsageError(const std::string& msg) : Error(ErrorKind::Usage, msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(ErrorKind::Config, msg) {}
};

struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};

// Shape/dimension disagreements in tensor code.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(ErrorKind::Numeric, msg) {}
};

// NaN/Inf and other numeric failure states.
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(ErrorKind::Numeric, msg) {}
};

// A context candidate does not precede its query, or dates are unordered.
struct TemporalOrderError : Error {
    explicit TemporalOrderError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};

// Fewer prior articles available than an operation requires.
struct InsufficientHistoryError : Error {
    explicit InsufficientHistoryError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};

}  // namespace finctx
