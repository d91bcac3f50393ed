#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace crossmom {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class NonFiniteValue : public Error {
public:
    using Error::Error;
};

class DuplicateCell : public Error {
public:
    using Error::Error;
};

/// A second-pass record references a row or column the first pass never saw,
/// or the second pass does not reproduce the first-pass counts.
class SummaryMismatch : public Error {
public:
    using Error::Error;
};

class EmptyData : public Error {
public:
    using Error::Error;
};

/// The moment matrix is singular: some variance component is not identifiable.
class SingularSystem : public Error {
public:
    using Error::Error;
};

class UndefinedKurtosis : public Error {
public:
    using Error::Error;
};

class DeltaTooLarge : public Error {
public:
    using Error::Error;
};

class SingularPredictionSystem : public Error {
public:
    using Error::Error;
};

class NotObserved : public Error {
public:
    using Error::Error;
};

class InstanceTooLarge : public Error {
public:
    using Error::Error;
};

class ChainTooShort : public Error {
public:
    using Error::Error;
};

class NoisyAutocorrelation : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace crossmom
