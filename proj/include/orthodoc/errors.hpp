#pragma once

#include <stdexcept>
#include <string>

namespace orthodoc {

// Bad input: malformed files, violated preconditions, schema mismatches.
// The CLI maps this to exit code 1; everything else lands on exit code 2.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace orthodoc
