#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace parkocc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input data is missing, malformed or violates a data contract.
class DataError : public Error {
public:
    using Error::Error;
};

/// One or more spot geometries failed validation.
class ValidationError : public DataError {
public:
    ValidationError(const std::string& what, std::vector<std::string> offending_ids)
        : DataError(what), offending_ids_(std::move(offending_ids)) {}

    const std::vector<std::string>& offending_ids() const noexcept { return offending_ids_; }

private:
    std::vector<std::string> offending_ids_;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

/// Optimistic-concurrency failure: the stored version moved on.
class ConflictError : public Error {
public:
    using Error::Error;
};

/// Model artifacts are incompatible with each other or with the request.
class ModelError : public Error {
public:
    using Error::Error;
};

/// Training diverged or otherwise could not complete.
class TrainingError : public Error {
public:
    using Error::Error;
};

}  // namespace parkocc
