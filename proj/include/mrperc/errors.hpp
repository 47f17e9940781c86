#ifndef MRPERC_ERRORS_HPP
#define MRPERC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mrperc {

// Invalid user-supplied parameters (bad ranges, malformed grids).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A configured size limit was hit: window width, cluster size, matrix size.
class CapExceeded : public std::length_error {
 public:
  using std::length_error::length_error;
};

// Mathematical precondition violated (pd >= 1, ancestor above the root, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Input violates a structural invariant that should hold by construction.
class ConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Coupling feasibility condition or rejection-sampling budget not met.
class FeasibilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonConvergence : public std::runtime_error {
 public:
  NonConvergence(const std::string& what, double last_residual)
      : std::runtime_error(what), last_residual_(last_residual) {}
  double last_residual() const noexcept { return last_residual_; }

 private:
  double last_residual_;
};

}  // namespace mrperc

#endif  // MRPERC_ERRORS_HPP
