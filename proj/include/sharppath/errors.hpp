#pragma once

#include <stdexcept>
#include <string>

namespace sharppath {

// Exit-code buckets used by the CLI: config errors exit 2, I/O errors 3,
// numerical aborts 4.
enum class ErrorClass { Config = 2, Io = 3, Numerical = 4 };

class Error : public std::runtime_error {
public:
  Error(ErrorClass cls, const std::string& msg)
      : std::runtime_error(msg), cls_(cls) {}
  ErrorClass cls() const { return cls_; }

private:
  ErrorClass cls_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(ErrorClass::Config, m) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& m) : Error(ErrorClass::Io, m) {}
};

struct IoError : Error {
  explicit IoError(const std::string& m) : Error(ErrorClass::Io, m) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& m)
      : Error(ErrorClass::Numerical, m) {}
};

// Optimizer asked to project onto a basis that was never computed.
struct StateError : Error {
  explicit StateError(const std::string& m) : Error(ErrorClass::Config, m) {}
};

struct SingularityError : Error {
  explicit SingularityError(const std::string& m)
      : Error(ErrorClass::Numerical, m) {}
};

struct AlignmentUndefined : Error {
  explicit AlignmentUndefined(const std::string& m)
      : Error(ErrorClass::Numerical, m) {}
};

} // namespace sharppath
