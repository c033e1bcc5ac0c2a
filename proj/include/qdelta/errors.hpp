#pragma once

#include <stdexcept>
#include <string>

namespace qdelta {

/// A computation would exceed its configured work or size bound.
struct ResourceBoundError : std::runtime_error {
    explicit ResourceBoundError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace qdelta
