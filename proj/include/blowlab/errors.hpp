#pragma once

#include <stdexcept>
#include <string>

namespace blowlab {

/// Base class for every recoverable failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative method (Krylov exponential, Picard, linear solve) stopped
/// before reaching its tolerance. `residual` is the best value achieved.
class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// A Picard iterate left the ball of radius 2*delta.
class BallViolation : public Error {
 public:
  BallViolation(const std::string& what, double norm, double radius)
      : Error(what), norm_(norm), radius_(radius) {}
  double norm() const noexcept { return norm_; }
  double radius() const noexcept { return radius_; }

 private:
  double norm_;
  double radius_;
};

class NoBlowUp : public Error {
 public:
  using Error::Error;
};

/// Cutoff profile fails the integrability test; carries the smallest
/// admissible transition exponent.
class ProfileRejected : public Error {
 public:
  ProfileRejected(const std::string& what, int suggested_kappa)
      : Error(what), suggested_kappa_(suggested_kappa) {}
  int suggested_kappa() const noexcept { return suggested_kappa_; }

 private:
  int suggested_kappa_;
};

class QuadratureNonConvergence : public Error {
 public:
  QuadratureNonConvergence(const std::string& what, double disagreement)
      : Error(what), disagreement_(disagreement) {}
  double disagreement() const noexcept { return disagreement_; }

 private:
  double disagreement_;
};

}  // namespace blowlab
