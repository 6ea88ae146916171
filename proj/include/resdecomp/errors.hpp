#pragma once

#include <stdexcept>
#include <string>

namespace resdecomp {

// Base for every error raised by the library. Each subclass maps to one
// failure category of the public contracts.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

class InputError : public Error {
public:
    using Error::Error;
};

// Invalid combination of command options.
class UsageError : public InputError {
public:
    using InputError::InputError;
};

class LengthError : public Error {
public:
    using Error::Error;
};

class EditError : public Error {
public:
    using Error::Error;
};

class SingularNormError : public Error {
public:
    using Error::Error;
};

class TrainingDivergedError : public Error {
public:
    using Error::Error;
};

class DegenerateStatisticError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace resdecomp
