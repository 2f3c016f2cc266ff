#pragma once

#include <stdexcept>
#include <string>

namespace sepp {

// All library failures surface as sepp::Error; the message is user facing.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sepp
