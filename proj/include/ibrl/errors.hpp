#pragma once

#include <stdexcept>
#include <string>

namespace ibrl {

/// Bad indices, malformed configs, misuse of an API contract. CLI maps this to exit 2.
class UsageError : public std::invalid_argument {
 public:
  explicit UsageError(const std::string& what) : std::invalid_argument(what) {}
};

/// Parameter vector outside the behavior model's declared ranges.
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

/// Every particle is inconsistent with the observed counts (zero posterior mass).
class DegenerateBeliefError : public std::runtime_error {
 public:
  explicit DegenerateBeliefError(const std::string& what) : std::runtime_error(what) {}
};

/// Exact backup would enumerate more alpha-functions than the configured cap.
class ExplosionError : public std::runtime_error {
 public:
  explicit ExplosionError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ibrl
