#pragma once

#include <stdexcept>
#include <string>

namespace linequal {

// Base for every error raised by the library. Modules derive narrower types
// where callers are expected to branch on the failure kind.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace linequal
