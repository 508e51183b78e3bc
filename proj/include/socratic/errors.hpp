#pragma once

#include <stdexcept>
#include <string>

namespace socratic {

// Base for every error the toolkit raises on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad configuration: missing credential, invalid config field, bad path.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed input document; message carries the byte offset or field path.
struct ParseError : Error {
    using Error::Error;
};

// Document parsed but declares an unsupported schema version.
struct VersionError : ParseError {
    using ParseError::ParseError;
};

// An LLM response that could not be interpreted; keeps the raw text around.
struct FormatError : Error {
    FormatError(const std::string& what, std::string raw_text)
        : Error(what), raw(std::move(raw_text)) {}
    explicit FormatError(const std::string& what) : Error(what) {}
    std::string raw;
};

// A precondition stated by an operation's contract was violated.
struct ContractError : Error {
    using Error::Error;
};

// The chat endpoint answered with a non-transient failure.
struct ProviderError : Error {
    ProviderError(const std::string& what, int http_status = 0)
        : Error(what), status(http_status) {}
    int status = 0;
};

// All retry attempts were spent without a successful response.
struct RetriesExhaustedError : ProviderError {
    using ProviderError::ProviderError;
};

// A subcommand needs an artifact a previous subcommand has not produced yet.
struct ArtifactError : Error {
    using Error::Error;
};

}  // namespace socratic
