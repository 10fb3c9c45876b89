#ifndef CHRONO_LENS_ERRORS_HPP_
#define CHRONO_LENS_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace chronolens {

struct OutOfDomainError : std::runtime_error {
  explicit OutOfDomainError(const std::string& what) : std::runtime_error(what) {}
};

struct IllConditionedError : std::runtime_error {
  explicit IllConditionedError(const std::string& what) : std::runtime_error(what) {}
};

struct StepFailureError : std::runtime_error {
  explicit StepFailureError(const std::string& what) : std::runtime_error(what) {}
};

struct NeverInsideError : std::runtime_error {
  explicit NeverInsideError(const std::string& what) : std::runtime_error(what) {}
};

struct NotObservedError : std::runtime_error {
  explicit NotObservedError(const std::string& what) : std::runtime_error(what) {}
};

struct DomainEscapeError : std::runtime_error {
  explicit DomainEscapeError(const std::string& what) : std::runtime_error(what) {}
};

struct OutOfChartError : std::runtime_error {
  explicit OutOfChartError(const std::string& what) : std::runtime_error(what) {}
};

struct IndeterminateRelationError : std::runtime_error {
  explicit IndeterminateRelationError(const std::string& what) : std::runtime_error(what) {}
};

struct NoValidTupleError : std::runtime_error {
  explicit NoValidTupleError(const std::string& what) : std::runtime_error(what) {}
};

struct DegenerateSpanError : std::runtime_error {
  explicit DegenerateSpanError(const std::string& what) : std::runtime_error(what) {}
};

struct NonLorentzianFitError : std::runtime_error {
  explicit NonLorentzianFitError(const std::string& what) : std::runtime_error(what) {}
};

struct LeftVacuumRegionError : std::runtime_error {
  explicit LeftVacuumRegionError(const std::string& what) : std::runtime_error(what) {}
};

struct CFLViolationError : std::runtime_error {
  explicit CFLViolationError(const std::string& what) : std::runtime_error(what) {}
};

struct PicardDivergedError : std::runtime_error {
  explicit PicardDivergedError(const std::string& what) : std::runtime_error(what) {}
};

struct SupportOverlapError : std::runtime_error {
  explicit SupportOverlapError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct SolveError : std::runtime_error {
  explicit SolveError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace chronolens

#endif
