#pragma once

#include <stdexcept>
#include <string>

namespace ga {

// All library failures derive from Error so callers can map them to exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
    using Error::Error;
};

// NaN/Inf escaped a numeric primitive.
struct NumericError : Error {
    using Error::Error;
};

// Binary file damage; message carries the byte offset.
struct FormatError : Error {
    FormatError(const std::string& what, size_t offset)
        : Error(what + " (byte offset " + std::to_string(offset) + ")"), byte_offset(offset) {}
    size_t byte_offset;
};

// Text parse failure; message carries the line number.
struct ParseError : Error {
    ParseError(const std::string& what, int line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_number(line) {}
    int line_number;
};

struct GenerationError : Error {
    using Error::Error;
};

struct ConsistencyError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

} // namespace ga
