#pragma once

#include <stdexcept>
#include <string>

namespace gmwb {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

// contract
class NegativeWithdrawal : public Error {
public:
    using Error::Error;
};
class WithdrawalExceedsBenefit : public Error {
public:
    using Error::Error;
};
class TimeOutOfRange : public Error {
public:
    using Error::Error;
};

// lattice
class MeanOutOfRange : public Error {
public:
    using Error::Error;
};

// pricer
class GridTooCoarse : public Error {
public:
    using Error::Error;
};
class NonFiniteValue : public Error {
public:
    using Error::Error;
};

// fee solver
class NoRoot : public Error {
public:
    using Error::Error;
};
class MaxIterations : public Error {
public:
    using Error::Error;
};

// regression
class SingularGram : public Error {
public:
    using Error::Error;
};
class ZeroTruth : public Error {
public:
    using Error::Error;
};

}  // namespace gmwb
