#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace stlda {

/// Broad failure class, used by the CLI to pick an exit code.
enum class ErrorCategory { Io, Parse, Config, Numeric, Format, Data };

const char* to_string(ErrorCategory category);

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error(ErrorCategory::Io, message) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error(ErrorCategory::Config, message) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& message) : Error(ErrorCategory::Numeric, message) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& message) : Error(ErrorCategory::Data, message) {}
};

/// A malformed input row. Carries the 1-based line number so callers can
/// decide whether to skip the row or abort.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& message)
        : Error(ErrorCategory::Parse, "line " + std::to_string(line) + ": " + message), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A spatial word (detector) that the model has never seen.
class OutOfVocabularyError : public DataError {
public:
    explicit OutOfVocabularyError(const std::string& detector)
        : DataError("detector '" + detector + "' is not in the model vocabulary"), detector_(detector) {}

    const std::string& detector() const noexcept { return detector_; }

private:
    std::string detector_;
};

// Model file failures. Each condition has its own type.
class ModelFileError : public Error {
public:
    explicit ModelFileError(const std::string& message) : Error(ErrorCategory::Format, message) {}
};

class FormatError : public ModelFileError {
public:
    using ModelFileError::ModelFileError;
};

class VersionError : public ModelFileError {
public:
    VersionError(std::uint32_t found, std::uint32_t expected)
        : ModelFileError("unsupported model file version " + std::to_string(found) +
                         " (this build reads version " + std::to_string(expected) + ")"),
          found_(found), expected_(expected) {}

    std::uint32_t found() const noexcept { return found_; }
    std::uint32_t expected() const noexcept { return expected_; }

private:
    std::uint32_t found_;
    std::uint32_t expected_;
};

class TruncatedFileError : public ModelFileError {
public:
    using ModelFileError::ModelFileError;
};

class ChecksumError : public ModelFileError {
public:
    using ModelFileError::ModelFileError;
};

}  // namespace stlda
