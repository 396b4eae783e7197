#ifndef RLSTM_ERRORS_HPP
#define RLSTM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace rlstm {

/// Operand shapes do not fit the operation.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A precondition of an operation was violated by the caller.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Malformed or inconsistent input data (CSV files, datasets).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training diverged or produced non-finite values.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace rlstm

#endif // RLSTM_ERRORS_HPP
