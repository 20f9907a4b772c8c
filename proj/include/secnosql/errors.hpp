#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace secnosql {

// Error codes as carried by the wire protocol's ERROR payload.
enum class ErrorCode : uint8_t {
    NotFound = 1,
    IntegrityFailure = 2,
    Parse = 3,
    Schema = 4,
    Backend = 5,
};

// Base for all failures that map onto a wire error code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg)
        : std::runtime_error(msg), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

class NotFoundError : public Error {
public:
    explicit NotFoundError(const std::string& msg = "row not found")
        : Error(ErrorCode::NotFound, msg) {}
};

class IntegrityError : public Error {
public:
    explicit IntegrityError(const std::string& msg = "integrity verification failed")
        : Error(ErrorCode::IntegrityFailure, msg) {}
};

class ParseError : public Error {
public:
    ParseError(const std::string& msg, size_t offset)
        : Error(ErrorCode::Parse, msg + " at offset " + std::to_string(offset)),
          offset_(offset) {}

    size_t offset() const noexcept { return offset_; }

private:
    size_t offset_;
};

// Equality on a non-key column, or any predicate shape the translation
// layer cannot serve against the encrypted store.
class UnsupportedPredicateError : public Error {
public:
    explicit UnsupportedPredicateError(const std::string& msg)
        : Error(ErrorCode::Parse, msg) {}
};

class SchemaError : public Error {
public:
    explicit SchemaError(const std::string& msg) : Error(ErrorCode::Schema, msg) {}
};

class BackendError : public Error {
public:
    explicit BackendError(const std::string& msg) : Error(ErrorCode::Backend, msg) {}
};

class CryptoError : public Error {
public:
    explicit CryptoError(const std::string& msg) : Error(ErrorCode::Backend, msg) {}
};

// Configuration problems are reported before anything starts; they never
// travel over the wire. CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace secnosql
