#pragma once

#include <stdexcept>
#include <string>

namespace echelon {

struct MalformedPe : std::runtime_error {
    explicit MalformedPe(const std::string& what) : std::runtime_error("malformed PE: " + what) {}
};

struct OffsetOutOfRange : std::out_of_range {
    explicit OffsetOutOfRange(const std::string& what) : std::out_of_range(what) {}
};

struct ShapeMismatch : std::invalid_argument {
    explicit ShapeMismatch(const std::string& what) : std::invalid_argument(what) {}
};

struct DegenerateDataset : std::runtime_error {
    explicit DegenerateDataset(const std::string& what) : std::runtime_error(what) {}
};

// A traced/trained set is missing one class entirely.
struct DegenerateClass : std::runtime_error {
    explicit DegenerateClass(const std::string& what) : std::runtime_error(what) {}
};

struct NoMalwareInValidation : std::runtime_error {
    explicit NoMalwareInValidation(const std::string& what) : std::runtime_error(what) {}
};

struct NoNegatives : std::runtime_error {
    explicit NoNegatives(const std::string& what) : std::runtime_error(what) {}
};

struct NoPositives : std::runtime_error {
    explicit NoPositives(const std::string& what) : std::runtime_error(what) {}
};

struct IoFailure : std::runtime_error {
    explicit IoFailure(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyDataset : std::runtime_error {
    explicit EmptyDataset(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace echelon
