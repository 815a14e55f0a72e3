#pragma once

#include <stdexcept>
#include <string>

namespace sceneseg {

// Thrown when a document is syntactically malformed (bad JSON, bad binary header).
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when a document parses but violates a semantic invariant
// (overlapping prediction segments, scores out of range, broken partitions).
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem-level failures.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace sceneseg
