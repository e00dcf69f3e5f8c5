#ifndef STREAMGDA_ERRORS_HPP
#define STREAMGDA_ERRORS_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace streamgda {

// Bad arguments: dimension mismatch, non-finite values, invalid config.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Covariance could not be factorized even after the ridge was applied.
class NumericalBreakdown : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed container or checkpoint (bad magic, version, flags).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Stream ended inside a record; record_index is the zero-based record that
// could not be read completely.
class TruncatedError : public FormatError {
public:
    TruncatedError(std::uint64_t record_index, const std::string& what)
        : FormatError(what + " (record " + std::to_string(record_index) + ")"),
          record_index_(record_index) {}

    std::uint64_t record_index() const noexcept { return record_index_; }

private:
    std::uint64_t record_index_;
};

}  // namespace streamgda

#endif  // STREAMGDA_ERRORS_HPP
