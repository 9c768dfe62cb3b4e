#ifndef AVBCI_ERRORS_HPP
#define AVBCI_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace avbci {

// Error taxonomy mirrors the tool exit codes: 2 = bad input/config,
// 3 = missing upstream artifact, 4 = numerical failure.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class UpstreamError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace avbci

#endif
