#pragma once

#include <stdexcept>
#include <string>

namespace prunetree {

/// Error categories. Each maps to a distinct process exit code in the CLI.
enum class ErrorCategory {
    Structural = 2,     // malformed network spec or tensor shape mismatch
    Validation = 3,     // bad argument (invalid structure id, dimension mismatch, ...)
    Precondition = 4,   // operation called outside its domain
    TrainingDiverged = 5,
    Ingestion = 6,      // dataset files
    Io = 7,             // checkpoints, run directories, config files
    Degenerate = 8,     // collapsed representation in similarity computations
    Usage = 9,
};

const char* category_name(ErrorCategory c) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }
    int exit_code() const noexcept { return static_cast<int>(category_); }

private:
    ErrorCategory category_;
};

class StructuralError : public Error {
public:
    explicit StructuralError(const std::string& what) : Error(ErrorCategory::Structural, what) {}
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(ErrorCategory::Validation, what) {}
};

class PreconditionError : public Error {
public:
    explicit PreconditionError(const std::string& what) : Error(ErrorCategory::Precondition, what) {}
};

class TrainingDivergedError : public Error {
public:
    TrainingDivergedError(int epoch, const std::string& what)
        : Error(ErrorCategory::TrainingDiverged, what), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

class IngestionError : public Error {
public:
    explicit IngestionError(const std::string& what) : Error(ErrorCategory::Ingestion, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorCategory::Io, what) {}
};

class DegenerateRepresentationError : public Error {
public:
    explicit DegenerateRepresentationError(const std::string& what)
        : Error(ErrorCategory::Degenerate, what) {}
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& what) : Error(ErrorCategory::Usage, what) {}
};

}  // namespace prunetree
