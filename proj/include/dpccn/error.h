// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DPCCN_ERROR_H_
#define DPCCN_ERROR_H_

#include <stdexcept>
#include <string>

namespace dpccn {

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Reference signal has no energy after mean removal.
class UndefinedReference : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Unreadable or inconsistent corpus / manifest data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training loss went non-finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DPCCN_CHECK_ARG(cond, msg)                                  \
  do {                                                              \
    if (!(cond)) throw ::dpccn::InvalidArgument(std::string(msg));  \
  } while (0)

}  // namespace dpccn

#endif  // DPCCN_ERROR_H_
