#pragma once

#include <chrono>
#include <stdexcept>
#include <string>

namespace ovdst {

// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnknownSlot : public Error {
public:
    explicit UnknownSlot(const std::string& key)
        : Error("unknown slot: " + key), key_(key) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class SchemaMismatch : public Error {
public:
    using Error::Error;
};

class MissingGold : public Error {
public:
    using Error::Error;
};

class LengthMismatch : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class MissingAsset : public Error {
public:
    using Error::Error;
};

class MissingOntology : public Error {
public:
    using Error::Error;
};

class MissingTrace : public Error {
public:
    using Error::Error;
};

class RefusalLoop : public Error {
public:
    using Error::Error;
};

// Gateway errors. TransportError and RateLimited are retried, BackendRefusal is not.
class TransportError : public Error {
public:
    using Error::Error;
};

class RateLimited : public Error {
public:
    RateLimited(const std::string& what, std::chrono::milliseconds retry_after)
        : Error(what), retry_after_(retry_after) {}
    std::chrono::milliseconds retry_after() const noexcept { return retry_after_; }

private:
    std::chrono::milliseconds retry_after_;
};

class BackendRefusal : public Error {
public:
    using Error::Error;
};

// Raised when a structured completion cannot be parsed even after the
// repair-and-reprompt cycle. Carries the last raw completion.
class UnparseableResponse : public Error {
public:
    UnparseableResponse(const std::string& what, std::string raw)
        : Error(what), raw_(std::move(raw)) {}
    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

} // namespace ovdst
