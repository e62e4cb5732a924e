#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace rcsmatch {

// Base for every recoverable failure raised by the library. The CLI maps
// input-shaped errors to exit code 2 and runtime matching/estimation
// failures to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- dataset construction ---------------------------------------------------

class DuplicateIdError : public Error {
 public:
  explicit DuplicateIdError(std::int64_t id)
      : Error("duplicate observation id " + std::to_string(id)), id_(id) {}
  std::int64_t id() const { return id_; }

 private:
  std::int64_t id_;
};

class RaggedCovariatesError : public Error {
 public:
  RaggedCovariatesError(std::int64_t id, std::size_t expected, std::size_t got)
      : Error("observation " + std::to_string(id) + " has " +
              std::to_string(got) + " covariates, expected " +
              std::to_string(expected)) {}
};

// --- propensity fitting -----------------------------------------------------

class OneClassPoolError : public Error {
 public:
  using Error::Error;
  OneClassPoolError() : Error("all labels in the fitting pool are identical") {}
};

// Hessian became numerically singular after the first iteration, or the
// coefficients ran past the divergence guard: the pool is (quasi-)separable.
class SeparationError : public Error {
 public:
  using Error::Error;
  SeparationError() : Error("logistic fit diverged: separable data") {}
};

class SingularDesignError : public Error {
 public:
  using Error::Error;
  SingularDesignError() : Error("rank-deficient covariate design") {}
};

class DimensionMismatchError : public Error {
 public:
  DimensionMismatchError(std::size_t expected, std::size_t got)
      : Error("dimension mismatch: expected " + std::to_string(expected) +
              ", got " + std::to_string(got)) {}
};

// --- distances ----------------------------------------------------------------

class SingularCovarianceError : public Error {
 public:
  using Error::Error;
  SingularCovarianceError()
      : Error("pooled covariance is not positive definite") {}
};

class DegenerateScoresError : public Error {
 public:
  using Error::Error;
  DegenerateScoresError()
      : Error("all scores identical: caliper width would be zero") {}
};

// --- balance ------------------------------------------------------------------

class DegenerateSamplesError : public Error {
 public:
  using Error::Error;
  DegenerateSamplesError()
      : Error("both samples have zero variance but different means") {}
};

// --- matching protocol --------------------------------------------------------

class SchemeMismatchError : public Error {
 public:
  using Error::Error;
};

class GroupEmptiedError : public Error {
 public:
  GroupEmptiedError(std::string group, int round)
      : Error("group " + group + " emptied in round " + std::to_string(round)),
        group_(std::move(group)),
        round_(round) {}
  const std::string& group() const { return group_; }
  int round() const { return round_; }

 private:
  std::string group_;
  int round_;
};

class MaxRoundsExceededError : public Error {
 public:
  explicit MaxRoundsExceededError(int rounds)
      : Error("group sizes did not equalize within " + std::to_string(rounds) +
              " rounds") {}
};

// --- estimation ---------------------------------------------------------------

class EmptyGroupError : public Error {
 public:
  explicit EmptyGroupError(const std::string& group)
      : Error("empty group " + group) {}
};

class RankDeficientDesignError : public Error {
 public:
  using Error::Error;
  RankDeficientDesignError() : Error("rank-deficient design") {}
};

// --- simulation -----------------------------------------------------------------

class PoolExhaustedError : public Error {
 public:
  using Error::Error;
};

// --- file / config input --------------------------------------------------------

class CsvError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace rcsmatch
