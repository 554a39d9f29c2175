#pragma once

#include <stdexcept>
#include <string>

namespace claad {

// Failure classes map one-to-one onto CLI exit codes.
enum class ErrorClass { Config = 1, Data = 2, Numerical = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what)
      : std::runtime_error(what), cls_(cls) {}

  ErrorClass error_class() const noexcept { return cls_; }
  int exit_code() const noexcept { return static_cast<int>(cls_); }

 private:
  ErrorClass cls_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorClass::Config, what) {}
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& what) : Error(ErrorClass::Config, what) {}
};

struct InvalidSpec : Error {
  explicit InvalidSpec(const std::string& what) : Error(ErrorClass::Config, what) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error(ErrorClass::Data, what) {}
};

struct MissingChannel : Error {
  explicit MissingChannel(const std::string& what) : Error(ErrorClass::Data, what) {}
};

struct InsufficientClasses : Error {
  explicit InsufficientClasses(const std::string& what) : Error(ErrorClass::Data, what) {}
};

struct NotFound : Error {
  explicit NotFound(const std::string& what) : Error(ErrorClass::Data, what) {}
};

struct CorruptFile : Error {
  explicit CorruptFile(const std::string& what) : Error(ErrorClass::Data, what) {}
};

struct DomainError : Error {
  explicit DomainError(const std::string& what) : Error(ErrorClass::Data, what) {}
};

struct IllConditioned : Error {
  explicit IllConditioned(const std::string& what) : Error(ErrorClass::Numerical, what) {}
};

// Carries the name of the tensor that went non-finite.
class NumericalFailure : public Error {
 public:
  NumericalFailure(std::string tensor, const std::string& what)
      : Error(ErrorClass::Numerical, what + " (tensor '" + tensor + "')"),
        tensor_(std::move(tensor)) {}

  const std::string& tensor() const noexcept { return tensor_; }

 private:
  std::string tensor_;
};

}  // namespace claad
