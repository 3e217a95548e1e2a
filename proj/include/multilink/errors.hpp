#pragma once

#include <stdexcept>
#include <string>

namespace multilink {

/// Base class for every error this library raises.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace multilink
