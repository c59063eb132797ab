#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace e2w {

// Malformed input data: bad JSON, missing fields, schema violations.
class SchemaError : public std::runtime_error {
public:
    explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

// Rejection-sampling budget exhausted while generating a scene or instance.
// Carries the seed so failures are reproducible from the error message alone.
class GenerationError : public std::runtime_error {
public:
    GenerationError(const std::string& what, std::uint64_t seed)
        : std::runtime_error(what + " (seed " + std::to_string(seed) + ")"), seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
};

}  // namespace e2w
