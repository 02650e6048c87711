#pragma once

#include <stdexcept>
#include <string>

namespace pda {

// Every failure raised by the library derives from Error so callers (the CLI in
// particular) can map it to an exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class ParameterError : public Error {
public:
    using Error::Error;
};

class InputError : public Error {
public:
    using Error::Error;
};

class ContractError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Non-finite values produced by a forward op, a diverging loss, etc.
class NumericError : public Error {
public:
    using Error::Error;
};

class AlignmentError : public Error {
public:
    using Error::Error;
};

class PoseError : public InputError {
public:
    using InputError::InputError;
};

class LoadError : public Error {
public:
    using Error::Error;
};

}  // namespace pda
