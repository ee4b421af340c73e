#pragma once

#include <stdexcept>
#include <string>

namespace acho {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// --- search space ---
class EmptyDomainError : public Error {
public:
    using Error::Error;
};
class InsufficientProductError : public Error {
public:
    using Error::Error;
};
class UnknownConfigError : public Error {
public:
    using Error::Error;
};
class BudgetExceedsSpaceError : public Error {
public:
    using Error::Error;
};

// --- surrogates ---
class InvalidQuantileError : public Error {
public:
    using Error::Error;
};
class EmptyTrainingSetError : public Error {
public:
    using Error::Error;
};
class DimensionMismatchError : public Error {
public:
    using Error::Error;
};
class QuantileMismatchError : public Error {
public:
    using Error::Error;
};

// --- conformal ---
class EmptyScoresError : public Error {
public:
    using Error::Error;
};
class EmptyValidationSetError : public Error {
public:
    using Error::Error;
};

// --- searcher ---
class HistoryTooSmallError : public Error {
public:
    using Error::Error;
};
class SpaceExhaustedError : public Error {
public:
    using Error::Error;
};

// --- objectives ---
class InvalidCountError : public Error {
public:
    using Error::Error;
};
class IncompatibleSpaceError : public Error {
public:
    using Error::Error;
};
class InvalidHyperparameterError : public Error {
public:
    using Error::Error;
};

// --- harness ---
class SpecParseError : public Error {
public:
    using Error::Error;
};
class IoError : public Error {
public:
    using Error::Error;
};
class EmptyTraceSetError : public Error {
public:
    using Error::Error;
};

} // namespace acho
