#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sampleval {

// Dense indices. Users and items are the bundle's contiguous ids; inside the
// evaluation pipeline "row" is a ground-truth row (test user) and "column" a
// catalog position.
using UserId = std::uint32_t;
using ItemId = std::uint32_t;
using Row = std::uint32_t;
using Col = std::uint32_t;

enum class Label : std::uint8_t { negative = 0, positive = 1 };

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sampleval
