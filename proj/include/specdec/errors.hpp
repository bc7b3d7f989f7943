#pragma once

#include <stdexcept>
#include <string>

namespace specdec {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// residual/normalize asked to renormalize an all-zero mass vector
struct ZeroMassError : Error {
    using Error::Error;
};

// argument outside an operation's domain (bad token id, q(y)=0, invalid shape...)
struct DomainError : Error {
    using Error::Error;
};

struct EmptyCorpusError : Error {
    using Error::Error;
};

// malformed or incompatible serialized model / head / config
struct FormatError : Error {
    using Error::Error;
};

// API used against its contract (e.g. oracle-only policy outside greedy mode)
struct MisuseError : Error {
    using Error::Error;
};

struct EmptyDatasetError : Error {
    using Error::Error;
};

// exact enumeration exceeded its branch budget
struct StateSpaceError : Error {
    using Error::Error;
};

// least-squares system is rank deficient
struct RankDeficientError : Error {
    using Error::Error;
};

// metric asked for on a trace with zero emitted tokens
struct EmptyGenerationError : Error {
    using Error::Error;
};

}  // namespace specdec
