#pragma once

#include <stdexcept>
#include <string>

namespace sv {

// Base for all library errors. Subtypes are defined next to the module
// whose contract they belong to.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem-level failure: open/read/write on any of the formats we handle.
struct IoError : Error {
  using Error::Error;
};

}  // namespace sv
