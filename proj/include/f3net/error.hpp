#pragma once

#include <stdexcept>
#include <string>

namespace f3net {

/// Broad failure class; the CLI maps each category onto a stable exit code.
enum class ErrorCategory {
  Usage,      // exit 2
  Data,       // exit 3
  Numerical,  // exit 4
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), category_(category), kind_(std::move(kind)) {}

  ErrorCategory category() const noexcept { return category_; }
  /// Short machine-readable tag such as "GeometryMismatch".
  const std::string& kind() const noexcept { return kind_; }

 private:
  ErrorCategory category_;
  std::string kind_;
};

class DataError : public Error {
 public:
  DataError(std::string kind, const std::string& what)
      : Error(ErrorCategory::Data, std::move(kind), what) {}
};

class NumericalError : public Error {
 public:
  NumericalError(std::string kind, const std::string& what)
      : Error(ErrorCategory::Numerical, std::move(kind), what) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorCategory::Usage, "Usage", what) {}
};

#define F3NET_DATA_ERROR(kind)                                          \
  struct kind : DataError {                                             \
    explicit kind(const std::string& what) : DataError(#kind, what) {}  \
  }

F3NET_DATA_ERROR(EmptyCase);
F3NET_DATA_ERROR(GeometryMismatch);
F3NET_DATA_ERROR(ShapeError);
F3NET_DATA_ERROR(ShapeMismatch);
F3NET_DATA_ERROR(InvalidLabel);
F3NET_DATA_ERROR(NonBinaryWMH);
F3NET_DATA_ERROR(NoLabel);
F3NET_DATA_ERROR(MissingLabel);
F3NET_DATA_ERROR(LayoutError);
F3NET_DATA_ERROR(CorruptFile);
F3NET_DATA_ERROR(OutOfRangeEpoch);

#undef F3NET_DATA_ERROR

struct InvalidConfig : Error {
  explicit InvalidConfig(const std::string& what)
      : Error(ErrorCategory::Usage, "InvalidConfig", what) {}
};

struct NonFiniteLoss : NumericalError {
  explicit NonFiniteLoss(const std::string& what) : NumericalError("NonFiniteLoss", what) {}
};

}  // namespace f3net
