#pragma once

#include <stdexcept>
#include <string>

namespace cah {

// Base class for all numerical and geometric failures raised by the library.
class GeometryError : public std::runtime_error {
 public:
  explicit GeometryError(const std::string& what) : std::runtime_error(what) {}
};

class OutOfDomain : public GeometryError {
 public:
  using GeometryError::GeometryError;
};

class NotPositiveDefinite : public GeometryError {
 public:
  using GeometryError::GeometryError;
};

class RankDeficient : public GeometryError {
 public:
  using GeometryError::GeometryError;
};

class InvalidArgument : public GeometryError {
 public:
  using GeometryError::GeometryError;
};

// A solution left the chart box before the end of its parameter interval.
// Carries the last parameter value at which the state was still inside.
class ChartExit : public GeometryError {
 public:
  ChartExit(const std::string& what, double exit_time)
      : GeometryError(what), exit_time_(exit_time) {}
  double exit_time() const { return exit_time_; }

 private:
  double exit_time_;
};

class StepSizeUnderflow : public GeometryError {
 public:
  StepSizeUnderflow(const std::string& what, double time)
      : GeometryError(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

class ConvergenceFailure : public GeometryError {
 public:
  using GeometryError::GeometryError;
};

}  // namespace cah
