#pragma once

#include <stdexcept>
#include <string>

namespace stowave {

// Every precondition violation in the library surfaces as this type; the
// message names the violated contract.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace stowave
