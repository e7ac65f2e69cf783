#pragma once

#include <stdexcept>
#include <string>

namespace tomeval {

// Process exit codes used by the CLI.
enum class ExitCode : int {
    ok = 0,
    failure = 1,
    config_error = 2,
    capability_error = 3,
    transport_exhausted = 4,
};

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what, ExitCode code = ExitCode::failure)
        : std::runtime_error(what), code_(code) {}

    ExitCode code() const noexcept { return code_; }

private:
    ExitCode code_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what, ExitCode::config_error) {}
};

class DatasetError : public Error {
public:
    DatasetError(const std::string& path, std::size_t line, const std::string& what)
        : Error(path + ":" + std::to_string(line) + ": " + what, ExitCode::config_error),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// A prefixing method was sent to a backend that cannot continue an assistant message.
class CapabilityViolation : public Error {
public:
    explicit CapabilityViolation(const std::string& what)
        : Error(what, ExitCode::capability_error) {}
};

// Retries exhausted on transient transport failures.
class TransportExhausted : public Error {
public:
    explicit TransportExhausted(const std::string& what)
        : Error(what, ExitCode::transport_exhausted) {}
};

class MalformedResponse : public Error {
public:
    explicit MalformedResponse(const std::string& what) : Error(what) {}
};

// Thrown by backends for failures worth retrying (connection reset, 429, 5xx).
class TransientError : public Error {
public:
    explicit TransientError(const std::string& what) : Error(what) {}
};

class MissingNameError : public Error {
public:
    explicit MissingNameError(const std::string& what) : Error(what) {}
};

} // namespace tomeval
