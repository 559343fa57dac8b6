#pragma once

#include <stdexcept>
#include <string>

namespace streamprobe {

// Bad configuration value or unknown key. Maps to CLI exit status 3.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Problems with input data. Maps to CLI exit status 4.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Unrecognized or malformed file header.
class FormatError : public DataError {
public:
    FormatError(const std::string& field, const std::string& what)
        : DataError("format error in field '" + field + "': " + what), field_(field) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

// A record that does not match its header or manifest.
class IntegrityError : public DataError {
public:
    IntegrityError(const std::string& record_id, const std::string& what)
        : DataError("integrity error in record '" + record_id + "': " + what), record_id_(record_id) {}

    const std::string& record_id() const noexcept { return record_id_; }

private:
    std::string record_id_;
};

// Dimensions of a probe and a sequence disagree.
class DimensionError : public DataError {
public:
    using DataError::DataError;
};

// An internal invariant failed. Maps to CLI exit status 5.
class InvariantError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace streamprobe
