#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace staog {

// Base for every error raised by the library. Callers that only care about
// "something went wrong" catch this; the CLI maps ValidationError to exit
// code 2 and everything else to 3.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input documents or arguments that violate a contract.
class ValidationError : public Error {
public:
    using Error::Error;
};

class ParseError : public ValidationError {
public:
    ParseError(const std::string& what, std::size_t line)
        : ValidationError(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    explicit ParseError(const std::string& what) : ValidationError(what) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_ = 0;
};

class UnknownTermError : public Error {
public:
    explicit UnknownTermError(const std::string& term)
        : Error("no lexicon entry for '" + term + "'"), term_(term) {}

    const std::string& term() const noexcept { return term_; }

private:
    std::string term_;
};

class DomainError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ConsistencyError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class VersionError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

}  // namespace staog
