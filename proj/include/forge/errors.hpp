#pragma once

#include <stdexcept>
#include <string>

namespace forge {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad argument combination (mismatched signature lengths, m >= n, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

// A record violates a domain invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

// An input file could not be parsed; carries the 1-based line when known.
class LoadError : public Error {
public:
    LoadError(const std::string& what, std::size_t line = 0)
        : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

class ConflictError : public Error {
public:
    using Error::Error;
};

// Checkpoint layout is incomplete or inconsistent.
class StructuralError : public Error {
public:
    using Error::Error;
};

class CorruptionError : public Error {
public:
    using Error::Error;
};

class CredentialError : public Error {
public:
    using Error::Error;
};

class RetryAfterError : public Error {
public:
    RetryAfterError(const std::string& what, double retry_after_seconds)
        : Error(what), retry_after_seconds_(retry_after_seconds) {}
    double retry_after_seconds() const noexcept { return retry_after_seconds_; }

private:
    double retry_after_seconds_;
};

// Transport failure or non-2xx reply from a chat / embedding endpoint.
class ProviderError : public Error {
public:
    ProviderError(const std::string& what, int status = 0) : Error(what), status_(status) {}
    int status() const noexcept { return status_; }
    bool retryable() const noexcept { return status_ == 0 || status_ == 429 || status_ >= 500; }

private:
    int status_;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace forge
