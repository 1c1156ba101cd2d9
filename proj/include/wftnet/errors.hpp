#pragma once

#include <stdexcept>
#include <string>

namespace wftnet {

// Shape or rank disagreement between operands.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Invalid hyperparameter, option, or run configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Bad input values: unparsable cells, non-finite entries.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Structurally broken file: ragged CSV row, bad magic, truncation.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// File is well-formed but internally inconsistent (e.g. stored config
// disagrees with stored parameter shapes).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Optimization failure: divergence or non-finite gradients.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Filesystem trouble: unreadable or unwritable paths.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A documented call contract was broken by the caller.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

} // namespace wftnet
