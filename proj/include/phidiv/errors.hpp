#pragma once

#include <stdexcept>
#include <string>

namespace phidiv {

// Base class for all library errors.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Argument outside the (interior of the) domain of phi, psi or a derivative.
class domain_error : public error {
public:
    using error::error;
};

// Parameter outside the box Theta.
class parameter_space_error : public error {
public:
    using error::error;
};

// Singular Gram / Omega matrix.
class rank_error : public error {
public:
    using error::error;
};

// Every outer start failed (inner dual unbounded or infeasible everywhere).
class estimation_failed : public error {
public:
    using error::error;
};

// Test not defined for this model, e.g. the model test with l == d.
class not_applicable : public error {
public:
    using error::error;
};

class invalid_argument : public error {
public:
    using error::error;
};

// File could not be opened or read.
class io_error : public error {
public:
    using error::error;
};

// Malformed input file; the message names the offending row and column.
class parse_error : public error {
public:
    using error::error;
};

} // namespace phidiv
