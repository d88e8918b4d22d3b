#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "errors.hpp"

namespace blowlab {

struct ProfileValues {
  double phi = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
};

inline double conjugate_exponent(double p) {
  if (!(p > 1.0)) throw std::invalid_argument("conjugate exponent needs p > 1");
  return p / (p - 1.0);
}

/// C^2 cutoff: 1 on [0,1], c * int_z^2 (s-1)^2 (2-s)^kappa ds on [1,2], 0 beyond 2.
/// The shifted variant moves the transition to [0,1] (1 on (-inf,0]).
class CutoffProfile {
 public:
  explicit CutoffProfile(int kappa = 8, bool shifted = false) : kappa_(kappa), shifted_(shifted) {
    if (kappa < 0) throw std::invalid_argument("CutoffProfile: kappa must be >= 0");
    c_ = (kappa + 1.0) * (kappa + 2.0) * (kappa + 3.0) / 2.0;
  }

  int kappa() const { return kappa_; }
  bool shifted() const { return shifted_; }
  double normalization() const { return c_; }
  CutoffProfile as_shifted() const { return CutoffProfile(kappa_, true); }

  ProfileValues operator()(double z) const {
    if (shifted_) z += 1.0;
    if (z <= 1.0) return {1.0, 0.0, 0.0};
    if (z >= 2.0) return {0.0, 0.0, 0.0};
    const double y = 2.0 - z, a = z - 1.0, k = kappa_;
    const double yk = std::pow(y, k);
    ProfileValues v;
    v.phi = c_ * (y * yk / (k + 1.0) - 2.0 * y * y * yk / (k + 2.0) + y * y * y * yk / (k + 3.0));
    v.d1 = -c_ * a * a * yk;
    // w'(z) = 2(z-1)(2-z)^k - k(z-1)^2(2-z)^(k-1)
    double wp = 2.0 * a * yk - (kappa_ > 0 ? k * a * a * std::pow(y, k - 1.0) : 0.0);
    v.d2 = -c_ * wp;
    return v;
  }

  /// Exponent of (2-z) in |Phi'|^p' / Phi^(p'-1) and |Phi''|^p' / Phi^(p'-1) near z = 2.
  double edge_exponent(double p) const {
    double pc = conjugate_exponent(p);
    return (kappa_ - 1.0) * pc - (kappa_ + 1.0) * (pc - 1.0);
  }

 private:
  int kappa_;
  bool shifted_;
  double c_;
};

/// Smallest integer kappa with (kappa-1)p' - (kappa+1)(p'-1) > -1, i.e. kappa > 2p' - 2.
inline int minimal_kappa(double p) {
  // the slack keeps p = 1.1 (p' = 10.999...) on the divergent side of kappa = 20
  double bound = 2.0 * conjugate_exponent(p) - 2.0;
  int k = static_cast<int>(std::floor(bound + 1e-9)) + 1;
  return std::max(k, 0);
}

/// kappa used when none is given: 8, raised to minimal_kappa + 2 for small p.
inline int auto_kappa(double p) { return std::max(8, minimal_kappa(p) + 2); }

/// Phi_1(t) = exp(4 - 1/(t(1-t))) on (0,1), zero elsewhere; maximum 1 at t = 1/2.
struct TimeBump {
  static double log_value(double t) { return 4.0 - 1.0 / (t * (1.0 - t)); }
  static double value(double t) {
    if (t <= 0.0 || t >= 1.0) return 0.0;
    return std::exp(log_value(t));
  }
  /// d/dt log Phi_1 = (1 - 2t) / (t(1-t))^2
  static double log_derivative(double t) {
    double s = t * (1.0 - t);
    return (1.0 - 2.0 * t) / (s * s);
  }
  static double derivative(double t) {
    if (t <= 0.0 || t >= 1.0) return 0.0;
    return value(t) * log_derivative(t);
  }
};

struct IntegrabilityReport {
  double value = 0.0;
  bool finite = false;
  double exponent = 0.0;
  int minimal_kappa = 0;
};

/// int over the transition of |Phi' + Phi''|^p' / Phi^(p'-1). Divergent profiles
/// (edge exponent <= -1) are rejected with the smallest admissible kappa. The
/// critical kind uses the shifted profile; the transition is the same interval
/// up to translation, so the value is identical.
inline IntegrabilityReport integrability_check(const CutoffProfile& prof, double p) {
  IntegrabilityReport rep;
  rep.exponent = prof.edge_exponent(p);
  rep.minimal_kappa = minimal_kappa(p);
  if (prof.kappa() < rep.minimal_kappa) {
    throw ProfileRejected("integrability_check: kappa = " + std::to_string(prof.kappa()) +
                              " diverges for p = " + std::to_string(p) + "; need kappa >= " +
                              std::to_string(rep.minimal_kappa),
                          rep.minimal_kappa);
  }
  const double pc = conjugate_exponent(p);
  CutoffProfile base(prof.kappa());
  auto f = [&](double z) {
    auto v = base(z);
    if (v.phi <= 0.0) return 0.0;
    return std::exp(pc * std::log(std::abs(v.d1 + v.d2)) - (pc - 1.0) * std::log(v.phi));
  };
  double err = 0.0;
  rep.value = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 1.0, 2.0, 15, 1e-12, &err);
  rep.finite = std::isfinite(rep.value);
  return rep;
}

/// int_0^1 |Phi_1'|^p' / Phi_1^(p'-1) = int_0^1 Phi_1 |(log Phi_1)'|^p'.
inline double time_bump_quotient(double p) {
  const double pc = conjugate_exponent(p);
  auto f = [&](double t) {
    double ld = TimeBump::log_derivative(t);
    if (ld == 0.0) return 0.0;
    return std::exp(TimeBump::log_value(t) + pc * std::log(std::abs(ld)));
  };
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, 1.0, 15, 1e-12, &err);
}

}  // namespace blowlab
