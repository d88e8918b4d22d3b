#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fields.hpp"
#include "forcing.hpp"
#include "mild.hpp"
#include "operator.hpp"
#include "profiles.hpp"
#include "quadrature.hpp"
#include "rational.hpp"

namespace blowlab {

enum class FamilyKind { parabolic, critical_log, grushin, engel };

inline std::string to_string(FamilyKind k) {
  switch (k) {
    case FamilyKind::parabolic: return "parabolic";
    case FamilyKind::critical_log: return "critical-log";
    case FamilyKind::grushin: return "grushin";
    case FamilyKind::engel: return "engel";
  }
  return "?";
}

inline FamilyKind parse_family_kind(const std::string& s) {
  if (s == "parabolic") return FamilyKind::parabolic;
  if (s == "critical-log" || s == "critical_log") return FamilyKind::critical_log;
  if (s == "grushin") return FamilyKind::grushin;
  if (s == "engel") return FamilyKind::engel;
  throw std::invalid_argument("unknown family kind '" + s + "'");
}

/// Which closed-form exponent applies.
enum class ExponentKind { parabolic_bounded, constant, grushin, engel, critical_log };

inline std::string to_string(ExponentKind k) {
  switch (k) {
    case ExponentKind::parabolic_bounded: return "parabolic";
    case ExponentKind::constant: return "constant";
    case ExponentKind::grushin: return "grushin";
    case ExponentKind::engel: return "engel";
    case ExponentKind::critical_log: return "critical-log";
  }
  return "?";
}

inline ExponentKind parse_exponent_kind(const std::string& s) {
  if (s == "parabolic") return ExponentKind::parabolic_bounded;
  if (s == "constant") return ExponentKind::constant;
  if (s == "grushin") return ExponentKind::grushin;
  if (s == "engel") return ExponentKind::engel;
  if (s == "critical-log" || s == "critical_log") return ExponentKind::critical_log;
  throw std::invalid_argument("unknown exponent kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// closed-form exponents

/// Exact exponent for rational p: slope of log I_Delta against log T
/// (for critical-log, of log(I_Delta/T) against log ln sqrt(R)).
inline Rational theoretical_exponent_exact(ExponentKind kind, int n, Rational p, int k = 1) {
  if (!(p > Rational(1))) throw std::invalid_argument("theoretical_exponent: p must exceed 1");
  Rational pc = p / (p - Rational(1));
  switch (kind) {
    case ExponentKind::parabolic_bounded: return Rational(n, 2) + Rational(1) - pc / Rational(2);
    case ExponentKind::constant: return Rational(n, 2) + Rational(1) - pc;
    case ExponentKind::grushin: return Rational(k + 4, 2) - pc;
    case ExponentKind::engel: return Rational((std::int64_t{1} << n) - 1, 2) + Rational(1) - pc;
    case ExponentKind::critical_log: return Rational(-(n + 1));
  }
  throw std::invalid_argument("theoretical_exponent: bad kind");
}

inline double theoretical_exponent(ExponentKind kind, int n, double p, int k = 1) {
  if (!(p > 1.0)) throw std::invalid_argument("theoretical_exponent: p must exceed 1");
  const double pc = conjugate_exponent(p);
  switch (kind) {
    case ExponentKind::parabolic_bounded: return n / 2.0 + 1.0 - pc / 2.0;
    case ExponentKind::constant: return n / 2.0 + 1.0 - pc;
    case ExponentKind::grushin: return (k + 4) / 2.0 - pc;
    case ExponentKind::engel: return (std::ldexp(1.0, n) - 1.0) / 2.0 + 1.0 - pc;
    case ExponentKind::critical_log: return -(n + 1.0);
  }
  throw std::invalid_argument("theoretical_exponent: bad kind");
}

/// Upper end of the nonexistence range, p < p_c.
inline Rational critical_exponent_lower_bound(ExponentKind kind, int n, int k = 1) {
  switch (kind) {
    case ExponentKind::parabolic_bounded:
    case ExponentKind::critical_log:
      if (n <= 2) throw std::invalid_argument("critical exponent: parabolic kinds need n > 2");
      return Rational(n, n - 1);
    case ExponentKind::constant:
      if (n <= 2) throw std::invalid_argument("critical exponent: constant kind needs n > 2");
      return Rational(n, n - 2);
    case ExponentKind::grushin:
      if (k < 1) throw std::invalid_argument("critical exponent: grushin needs k >= 1");
      return Rational(k + 2, k);
    case ExponentKind::engel: {
      if (n < 2 || n > 62) throw std::invalid_argument("critical exponent: engel needs 2 <= n <= 62");
      std::int64_t two_n = std::int64_t{1} << n;
      return Rational(two_n - 1, two_n - 3);
    }
  }
  throw std::invalid_argument("critical exponent: bad kind");
}

/// 1 / (p' (p/2)^(p'-1)): constant of |u||g| <= |u|^p psi / 2 + C |g|^p' psi^(1-p').
inline double young_constant(double p) {
  const double pc = conjugate_exponent(p);
  return 1.0 / (pc * std::pow(p / 2.0, pc - 1.0));
}

/// (C1 eps)^(-2/(p' - lambda)) with p' = p/(p-1).
inline double blowup_upper_bound(double eps, double lambda, double p, double C1 = 1.0) {
  const double pc = conjugate_exponent(p);
  if (!(lambda < pc)) throw std::domain_error("blowup_upper_bound: need lambda < p/(p-1)");
  if (!(eps > 0.0) || !(C1 > 0.0)) throw std::domain_error("blowup_upper_bound: eps and C1 must be positive");
  return std::pow(C1 * eps, -2.0 / (pc - lambda));
}

// ---------------------------------------------------------------------------
// time factors

/// tau(t) on [0,T]: Phi(2t/T) (parabolic), Phi(t/T + 1) (critical-log), Phi_1(t/T) (grushin, engel).
class TimeFactor {
 public:
  enum class Shape { doubled, shifted, bump };

  TimeFactor() = default;
  TimeFactor(Shape shape, double T, CutoffProfile prof) : shape_(shape), T_(T), prof_(prof.kappa()) {
    if (!(T > 0.0)) throw std::invalid_argument("TimeFactor: T must be positive");
  }

  Shape shape() const { return shape_; }
  double horizon() const { return T_; }

  double value(double t) const {
    switch (shape_) {
      case Shape::doubled: return prof_(2.0 * t / T_).phi;
      case Shape::shifted: return prof_(t / T_ + 1.0).phi;
      case Shape::bump: return TimeBump::value(t / T_);
    }
    return 0.0;
  }
  double derivative(double t) const {
    switch (shape_) {
      case Shape::doubled: return prof_(2.0 * t / T_).d1 * 2.0 / T_;
      case Shape::shifted: return prof_(t / T_ + 1.0).d1 / T_;
      case Shape::bump: return TimeBump::derivative(t / T_) / T_;
    }
    return 0.0;
  }

  /// int_0^T tau
  double integral() const {
    switch (shape_) {
      case Shape::doubled: return 0.5 * T_ * (1.0 + profile_mass());
      case Shape::shifted: return T_ * profile_mass();
      case Shape::bump: {
        double err = 0.0;
        return T_ * boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
                        [](double s) { return TimeBump::value(s); }, 0.0, 1.0, 15, 1e-13, &err);
      }
    }
    return 0.0;
  }

  /// int_0^T tau^(1-p') |tau'|^p'
  double quotient(double p) const {
    const double pc = conjugate_exponent(p);
    switch (shape_) {
      case Shape::doubled: return std::pow(2.0 / T_, pc - 1.0) * profile_quotient(p);
      case Shape::shifted: return std::pow(T_, 1.0 - pc) * profile_quotient(p);
      case Shape::bump: return std::pow(T_, 1.0 - pc) * time_bump_quotient(p);
    }
    return 0.0;
  }

  /// Smallest kappa for which quotient(p) is finite: kappa + 1 - p' > -1.
  static int minimal_kappa(double p) {
    double bound = conjugate_exponent(p) - 2.0;
    return std::max(0, static_cast<int>(std::floor(bound + 1e-9)) + 1);
  }

 private:
  double profile_mass() const {
    double err = 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate([&](double z) { return prof_(z).phi; }, 1.0, 2.0,
                                                                         15, 1e-13, &err);
  }
  double profile_quotient(double p) const {
    if (prof_.kappa() < minimal_kappa(p)) {
      throw ProfileRejected("time factor: profile quotient diverges; need kappa >= " + std::to_string(minimal_kappa(p)),
                            minimal_kappa(p));
    }
    const double pc = conjugate_exponent(p);
    auto f = [&](double z) {
      auto v = prof_(z);
      if (v.phi <= 0.0 || v.d1 == 0.0) return 0.0;
      return std::exp(pc * std::log(std::abs(v.d1)) + (1.0 - pc) * std::log(v.phi));
    };
    double err = 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 1.0, 2.0, 15, 1e-13, &err);
  }

  Shape shape_ = Shape::doubled;
  double T_ = 1.0;
  CutoffProfile prof_;
};

// ---------------------------------------------------------------------------
// test-function families

struct PsiValues {
  double psi = 0.0;
  double psi_t = 0.0;
  double lap = 0.0;  // Delta_X psi
};

/// Spatial part Phi(P(x)) and Delta_X Phi(P(x)).
struct SpatialValues {
  double phi = 0.0;
  double lap = 0.0;
  double level = 0.0;  // P(x)
};

/// psi(t,x) = tau(t) Phi(P(x)).
///   parabolic:    P = |x|^2 / T
///   grushin:      P = (x1^(2k+2) + x2^2) / T^(k+1)
///   engel:        P = (sum_i x_i^(2^(n-i+1))) / T^(2^(n-1))
///   critical-log: P = ln(|x| / sqrt R) / ln sqrt R with the shifted profile
/// The polynomial kinds are P = sum_i |y_i|^e_i with x_i = s_i y_i.
class TestFunctionFamily {
 public:
  static TestFunctionFamily parabolic(const VectorFieldSystem& sys, double T, int kappa = 8) {
    std::vector<double> e(sys.dim(), 2.0);
    return TestFunctionFamily(FamilyKind::parabolic, sys, T, 0.0, e, T, CutoffProfile(kappa),
                              TimeFactor(TimeFactor::Shape::doubled, T, CutoffProfile(kappa)));
  }
  static TestFunctionFamily grushin(int k, double T, int kappa = 8) {
    auto sys = builtin_system(SystemTag::grushin, 2, k);
    std::vector<double> e{2.0 * k + 2.0, 2.0};
    return TestFunctionFamily(FamilyKind::grushin, sys, T, 0.0, e, std::pow(T, k + 1.0), CutoffProfile(kappa),
                              TimeFactor(TimeFactor::Shape::bump, T, CutoffProfile(kappa)));
  }
  static TestFunctionFamily engel(std::size_t n, double T, int kappa = 8) {
    auto sys = builtin_system(SystemTag::engel, n);
    std::vector<double> e(n);
    for (std::size_t i = 0; i < n; ++i) e[i] = std::ldexp(1.0, static_cast<int>(n - i));
    return TestFunctionFamily(FamilyKind::engel, sys, T, 0.0, e, std::pow(T, std::ldexp(1.0, static_cast<int>(n) - 1)),
                              CutoffProfile(kappa), TimeFactor(TimeFactor::Shape::bump, T, CutoffProfile(kappa)));
  }
  static TestFunctionFamily critical_log(const VectorFieldSystem& sys, double R, double T, int kappa = 8) {
    if (!(R > 1.0)) throw std::invalid_argument("critical-log family: R must exceed 1");
    return TestFunctionFamily(FamilyKind::critical_log, sys, T, R, {}, 0.0, CutoffProfile(kappa, true),
                              TimeFactor(TimeFactor::Shape::shifted, T, CutoffProfile(kappa)));
  }
  /// Family of the given kind on its natural system; `sys` is used by parabolic and critical-log.
  static TestFunctionFamily make(FamilyKind kind, const VectorFieldSystem& sys, double T, int kappa, int k = 1) {
    switch (kind) {
      case FamilyKind::parabolic: return parabolic(sys, T, kappa);
      case FamilyKind::grushin: return grushin(k, T, kappa);
      case FamilyKind::engel: return engel(sys.dim(), T, kappa);
      case FamilyKind::critical_log: return critical_log(sys, T, T, kappa);
    }
    throw std::invalid_argument("TestFunctionFamily::make: bad kind");
  }

  FamilyKind kind() const { return kind_; }
  const VectorFieldSystem& system() const { return sys_; }
  std::size_t dim() const { return sys_.dim(); }
  double T() const { return T_; }
  double R() const { return R_; }
  const CutoffProfile& profile() const { return prof_; }
  const TimeFactor& time() const { return time_; }
  const std::vector<double>& exponents() const { return e_; }
  /// s_i in x_i = s_i y_i
  const std::vector<double>& stretch() const { return s_; }
  double jacobian() const {
    double j = 1.0;
    for (double v : s_) j *= v;
    return j;
  }
  /// Half-width of the box containing supp psi along each axis.
  std::vector<double> support_extent() const {
    std::vector<double> out(dim());
    for (std::size_t i = 0; i < dim(); ++i) {
      out[i] = kind_ == FamilyKind::critical_log ? R_ : s_[i] * std::pow(2.0, 1.0 / e_[i]);
    }
    return out;
  }
  /// Values of P bounding the transition of Phi: [1,2], or [0,1] for critical-log.
  double plateau_level() const { return kind_ == FamilyKind::critical_log ? 0.0 : 1.0; }
  double support_level() const { return plateau_level() + 1.0; }
  /// Radial integration is exact for euclidean fields.
  bool radial() const { return sys_.tag() == SystemTag::euclidean; }

  ExponentKind exponent_kind() const {
    switch (kind_) {
      case FamilyKind::grushin: return ExponentKind::grushin;
      case FamilyKind::engel: return ExponentKind::engel;
      case FamilyKind::critical_log: return ExponentKind::critical_log;
      case FamilyKind::parabolic:
        return sys_.all_constant() ? ExponentKind::constant : ExponentKind::parabolic_bounded;
    }
    return ExponentKind::parabolic_bounded;
  }

  /// Phi(P) and Delta_X Phi(P) at the scaled point y (x = s y). Polynomial kinds only.
  SpatialValues spatial_scaled(std::span<const double> y) const {
    const std::size_t n = dim();
    double x[16], dP[16], d2P[16];
    double P = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = s_[i] * y[i];
      const double e = e_[i], a = std::abs(y[i]);
      const double ae2 = std::pow(a, e - 2.0);
      P += ae2 * a * a;
      dP[i] = e * ae2 * y[i] / s_[i];
      d2P[i] = e * (e - 1.0) * ae2 / (s_[i] * s_[i]);
    }
    return assemble(P, x, dP, nullptr, d2P);
  }

  SpatialValues spatial(std::span<const double> x) const {
    const std::size_t n = dim();
    if (x.size() != n) throw std::invalid_argument("spatial: dimension mismatch");
    if (kind_ != FamilyKind::critical_log) {
      double y[16];
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] / s_[i];
      return spatial_scaled(std::span<const double>(y, n));
    }
    double r2 = 0.0;
    for (double v : x) r2 += v * v;
    const double L = 0.5 * std::log(R_);
    if (r2 == 0.0) return SpatialValues{1.0, 0.0, -std::numeric_limits<double>::infinity()};
    const double r = std::sqrt(r2);
    const double P = std::log(r / std::sqrt(R_)) / L;
    double dP[16], H[256], xx[16];
    for (std::size_t i = 0; i < n; ++i) {
      xx[i] = x[i];
      dP[i] = x[i] / (L * r2);
      for (std::size_t j = 0; j < n; ++j) H[i * n + j] = ((i == j ? 1.0 / r2 : 0.0) - 2.0 * x[i] * x[j] / (r2 * r2)) / L;
    }
    return assemble(P, xx, dP, H, nullptr);
  }

  PsiValues psi(double t, std::span<const double> x) const {
    SpatialValues s = spatial(x);
    const double tau = time_.value(t), dtau = time_.derivative(t);
    return PsiValues{tau * s.phi, dtau * s.phi, tau * s.lap};
  }

 private:
  TestFunctionFamily(FamilyKind kind, VectorFieldSystem sys, double T, double R, std::vector<double> e, double scale,
                     CutoffProfile prof, TimeFactor time)
      : kind_(kind), sys_(std::move(sys)), T_(T), R_(R), e_(std::move(e)), prof_(prof), time_(time) {
    if (!(T > 0.0)) throw std::invalid_argument("TestFunctionFamily: T must be positive");
    if (sys_.dim() > 16) throw std::invalid_argument("TestFunctionFamily: dimension above 16");
    if (kind_ == FamilyKind::critical_log && !radial()) {
      throw std::invalid_argument("critical-log family: only euclidean fields are supported");
    }
    for (double ei : e_) s_.push_back(std::pow(scale, 1.0 / ei));
    auto oc = sys_.expanded();
    const std::size_t n = sys_.dim();
    B_.resize(n * n);
    b_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      b_[i] = CompiledExpr(oc.first[i]);
      for (std::size_t j = 0; j < n; ++j) B_[i * n + j] = CompiledExpr(oc.second[i][j]);
    }
  }

  /// Phi'' sum B_ij dP_i dP_j + Phi' (sum B_ij d2P_ij + sum b_j dP_j); the
  /// Hessian is either full (H) or diagonal (d2).
  SpatialValues assemble(double P, const double* x, const double* dP, const double* H, const double* d2) const {
    SpatialValues out;
    out.level = P;
    auto pv = prof_(P);
    out.phi = pv.phi;
    if (pv.d1 == 0.0 && pv.d2 == 0.0) return out;
    const std::size_t n = dim();
    double quad = 0.0, trace = 0.0, drift = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const auto& B = B_[i * n + j];
        if (B.is_zero()) continue;
        double bij = B(x);
        quad += bij * dP[i] * dP[j];
        if (H) trace += bij * H[i * n + j];
        else if (i == j) trace += bij * d2[i];
      }
      if (!b_[i].is_zero()) drift += b_[i](x) * dP[i];
    }
    out.lap = pv.d2 * quad + pv.d1 * (trace + drift);
    return out;
  }

  FamilyKind kind_;
  VectorFieldSystem sys_;
  double T_;
  double R_;
  std::vector<double> e_;
  std::vector<double> s_;
  CutoffProfile prof_;
  TimeFactor time_;
  std::vector<CompiledExpr> B_;
  std::vector<CompiledExpr> b_;
};

inline PsiValues psi_eval(const TestFunctionFamily& fam, double t, std::span<const double> x) { return fam.psi(t, x); }

// ---------------------------------------------------------------------------
// functional integrals

struct QuadratureOptions {
  double tolerance = 1e-6;
  int max_level = 32;
  /// use the 1-D radial integral when the family allows it
  bool allow_radial = true;
};

struct FunctionalValues {
  double I_delta = 0.0;
  double I_t = 0.0;
  double F = 0.0;
  double spatial_delta = 0.0;  // int Phi^(1-p') |Delta_X Phi(P)|^p' dx
  double spatial_mass = 0.0;   // int Phi(P) dx
  double spatial_forcing = 0.0;
  double time_integral = 0.0;
  double time_quotient = 0.0;
  int level = 0;
  bool radial = false;
};

namespace detail {

inline double quotient_density(double phi, double lap, double pc) {
  if (phi <= 0.0 || lap == 0.0) return 0.0;
  return std::exp(pc * std::log(std::abs(lap)) - (pc - 1.0) * std::log(phi));
}

/// [a,b] split at the sign changes of h (found on a 256-point scan, refined by bisection).
/// |h|^p' has a weak singularity there that slows panel doubling for small p'.
inline std::vector<double> sign_breaks(const std::function<double(double)>& h, double a, double b) {
  std::vector<double> out{a};
  const int M = 256;
  double x0 = a, h0 = h(a);
  for (int i = 1; i <= M; ++i) {
    double x1 = a + (b - a) * i / M, h1 = h(x1);
    if ((h0 < 0.0 && h1 > 0.0) || (h0 > 0.0 && h1 < 0.0)) {
      double lo = x0, hi = x1, hlo = h0;
      for (int it = 0; it < 80 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
        double mid = 0.5 * (lo + hi), hm = h(mid);
        if ((hm < 0.0) == (hlo < 0.0)) {
          lo = mid;
          hlo = hm;
        } else {
          hi = mid;
        }
      }
      out.push_back(0.5 * (lo + hi));
    }
    x0 = x1;
    h0 = h1;
  }
  out.push_back(b);
  return out;
}

inline double split_integral(const std::function<double(double)>& f, const std::vector<double>& breaks, int level) {
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) sum += segment_integral(f, breaks[i], breaks[i + 1], level);
  return sum;
}

}  // namespace detail

/// Spatial integral of g(Phi, Delta_X Phi, x) over supp Phi(P), optionally without the plateau.
inline QuadratureResult spatial_integral(const TestFunctionFamily& fam,
                                         const std::function<double(const SpatialValues&, std::span<const double>)>& g,
                                         bool skip_plateau, const QuadratureOptions& opt, bool* used_radial = nullptr) {
  const std::size_t n = fam.dim();
  const bool radial = opt.allow_radial && fam.radial();
  if (used_radial) *used_radial = radial;
  if (fam.kind() == FamilyKind::critical_log) {
    if (!radial) throw std::invalid_argument("critical-log integrals need the radial path");
    const double R = fam.R(), L = 0.5 * std::log(R), rs = std::sqrt(R), omega = sphere_area(n);
    auto breaks = detail::sign_breaks(
        [&](double z) {
          std::vector<double> x(n, 0.0);
          x[0] = rs * std::exp(z * L);
          return fam.spatial(x).lap;
        },
        0.0, 1.0);
    return converge(
        [&](int level) {
          std::vector<double> x(n, 0.0);
          // transition: z in [0,1], r = sqrt(R) e^(zL), dr = r L dz
          double sum = detail::split_integral(
              [&](double z) {
                double r = rs * std::exp(z * L);
                x[0] = r;
                return g(fam.spatial(x), x) * omega * std::pow(r, static_cast<double>(n)) * L;
              },
              breaks, level);
          if (!skip_plateau) {
            sum += segment_integral(
                [&](double r) {
                  x[0] = r;
                  return g(fam.spatial(x), x) * omega * std::pow(r, static_cast<double>(n) - 1.0);
                },
                0.0, rs, level);
          }
          return sum;
        },
        opt.tolerance, opt.max_level);
  }
  if (radial) {
    // P = |x|^2 / T: rho = |x| / sqrt(T) in [0, sqrt 2]
    const double s = fam.stretch()[0], omega = sphere_area(n);
    auto breaks = detail::sign_breaks(
        [&](double rho) {
          std::vector<double> y(n, 0.0);
          y[0] = rho;
          return fam.spatial_scaled(y).lap;
        },
        1.0, std::sqrt(2.0));
    return converge(
        [&](int level) {
          std::vector<double> y(n, 0.0);
          auto f = [&](double rho) {
            y[0] = rho;
            std::vector<double> x{y};
            x[0] = rho * s;
            return g(fam.spatial_scaled(y), x) * omega * std::pow(rho, static_cast<double>(n) - 1.0) *
                   std::pow(s, static_cast<double>(n));
          };
          double sum = detail::split_integral(f, breaks, level);
          if (!skip_plateau) sum += segment_integral(f, 0.0, 1.0, level);
          return sum;
        },
        opt.tolerance, opt.max_level);
  }
  LevelSetDomain dom;
  dom.exponents = fam.exponents();
  dom.skip_inner = skip_plateau;
  dom.oscillation.assign(n, 0.0);
  // trig coefficients oscillate at unit frequency in x, i.e. at s_i in y
  auto oc = fam.system().expanded();
  for (std::size_t i = 0; i < n; ++i) {
    bool trig = false;
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        const auto& e = oc.second[a][b];
        for (const auto& [key, c] : e.terms())
          if (key.sin_pow[i] || key.cos_pow[i]) trig = true;
      }
      for (const auto& [key, c] : oc.first[a].terms())
        if (key.sin_pow[i] || key.cos_pow[i]) trig = true;
    }
    if (trig) dom.oscillation[i] = fam.stretch()[i];
  }
  LevelSetQuadrature quad(dom);
  const double jac = fam.jacobian();
  return converge(
      [&](int level) {
        std::vector<double> x(n);
        return jac * quad.integrate(
                         [&](std::span<const double> y) {
                           for (std::size_t i = 0; i < n; ++i) x[i] = fam.stretch()[i] * y[i];
                           return g(fam.spatial_scaled(y), x);
                         },
                         level);
      },
      opt.tolerance, opt.max_level);
}

/// I_Delta = int_0^T int psi^(-1/(p-1)) |Delta_X psi|^p', I_t likewise with psi_t,
/// F = int_0^T int f psi. psi = tau Phi(P) factors each into a time and a space integral.
inline FunctionalValues functional_integrals(const TestFunctionFamily& fam, double p, const Forcing& f = {},
                                             const QuadratureOptions& opt = {}) {
  integrability_check(fam.profile(), p);
  const double pc = conjugate_exponent(p);
  FunctionalValues out;
  auto d = spatial_integral(
      fam, [&](const SpatialValues& s, std::span<const double>) { return detail::quotient_density(s.phi, s.lap, pc); },
      true, opt, &out.radial);
  auto m = spatial_integral(fam, [](const SpatialValues& s, std::span<const double>) { return s.phi; }, false, opt);
  out.spatial_delta = d.value;
  out.spatial_mass = m.value;
  out.level = std::max(d.level, m.level);
  if (!f.is_zero()) {
    auto q = spatial_integral(
        fam, [&](const SpatialValues& s, std::span<const double> x) { return s.phi == 0.0 ? 0.0 : f(x) * s.phi; }, false,
        opt);
    out.spatial_forcing = q.value;
    out.level = std::max(out.level, q.level);
  }
  out.time_integral = fam.time().integral();
  out.time_quotient = fam.time().quotient(p);
  out.I_delta = out.time_integral * out.spatial_delta;
  out.I_t = out.time_quotient * out.spatial_mass;
  out.F = out.time_integral * out.spatial_forcing;
  return out;
}

// ---------------------------------------------------------------------------
// scaling fits

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double max_residual = 0.0;
};

inline LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t m = x.size();
  if (m < 2 || y.size() != m) throw std::invalid_argument("fit_line: need matching samples");
  LinearFit fit;
  fit.slope = ls_slope(x, y);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < m; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(m);
  my /= static_cast<double>(m);
  fit.intercept = my - fit.slope * mx;
  double sse = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double r = y[i] - (fit.intercept + fit.slope * x[i]);
    sse += r * r;
    sxx += (x[i] - mx) * (x[i] - mx);
    fit.max_residual = std::max(fit.max_residual, std::abs(r));
  }
  fit.slope_se = m > 2 ? std::sqrt(sse / static_cast<double>(m - 2) / sxx) : 0.0;
  return fit;
}

struct ScalingRow {
  double T = 0.0;
  FunctionalValues values;
};

struct FunctionalReport {
  FamilyKind kind = FamilyKind::parabolic;
  ExponentKind exponent_kind = ExponentKind::constant;
  double p = 0.0;
  int kappa = 0;
  std::vector<ScalingRow> rows;
  LinearFit fit_delta;  // log I_Delta vs log T  (critical-log: log(I_Delta/T) vs log ln sqrt R)
  LinearFit fit_t;
  double theta = 0.0;
  double tolerance = 0.05;
  /// |slope - theta| <= tol, or slope <= theta + tol for the upper-bound kind
  bool pass = false;
  /// log-linear fit residual above 0.05
  bool poor_fit = false;
};

struct FitOptions {
  int k = 1;
  int kappa = 0;  // 0: auto_kappa(p)
  double slope_tolerance = 0.05;
  QuadratureOptions quadrature;
  Forcing forcing;
};

inline void check_scaling_grid(const std::vector<double>& Ts) {
  if (Ts.size() < 5) throw std::invalid_argument("fit_scaling: need at least 5 parameter values");
  double lo = *std::min_element(Ts.begin(), Ts.end()), hi = *std::max_element(Ts.begin(), Ts.end());
  if (!(lo > 0.0) || hi / lo < 100.0 * (1 - 1e-12)) throw std::invalid_argument("fit_scaling: values must span two decades");
}

/// Log-log fits over computed rows and the comparison with theta.
inline FunctionalReport summarize_scaling(FamilyKind kind, ExponentKind ekind, int n, double p, int k, int kappa,
                                          std::vector<ScalingRow> rows, double tolerance) {
  FunctionalReport rep;
  rep.kind = kind;
  rep.exponent_kind = ekind;
  rep.p = p;
  rep.kappa = kappa;
  rep.tolerance = tolerance;
  rep.rows = std::move(rows);
  std::vector<double> lx, ld, lt;
  for (const auto& row : rep.rows) {
    if (kind == FamilyKind::critical_log) {
      lx.push_back(std::log(0.5 * std::log(row.T)));
      ld.push_back(std::log(row.values.I_delta / row.T));
      lt.push_back(std::log(row.values.I_t / row.T));
    } else {
      lx.push_back(std::log(row.T));
      ld.push_back(std::log(row.values.I_delta));
      lt.push_back(std::log(row.values.I_t));
    }
  }
  rep.fit_delta = fit_line(lx, ld);
  rep.fit_t = fit_line(lx, lt);
  rep.theta = theoretical_exponent(ekind, n, p, k);
  if (ekind == ExponentKind::parabolic_bounded) {
    rep.pass = rep.fit_delta.slope <= rep.theta + tolerance;
  } else {
    rep.pass = std::abs(rep.fit_delta.slope - rep.theta) <= tolerance;
  }
  rep.poor_fit = rep.fit_delta.max_residual > 0.05;
  return rep;
}

/// I_Delta, I_t over a grid of T (critical-log: T = R) and the fitted slopes.
inline FunctionalReport fit_scaling(FamilyKind kind, const VectorFieldSystem& sys, double p, const std::vector<double>& Ts,
                                    const FitOptions& opt = {}) {
  check_scaling_grid(Ts);
  const int kappa = opt.kappa > 0 ? opt.kappa : auto_kappa(p);
  std::vector<ScalingRow> rows;
  ExponentKind ekind = ExponentKind::constant;
  for (double T : Ts) {
    auto fam = TestFunctionFamily::make(kind, sys, T, kappa, opt.k);
    ekind = fam.exponent_kind();
    rows.push_back(ScalingRow{T, functional_integrals(fam, p, opt.forcing, opt.quadrature)});
  }
  return summarize_scaling(kind, ekind, static_cast<int>(sys.dim()), p, opt.k, kappa, std::move(rows),
                           opt.slope_tolerance);
}

// ---------------------------------------------------------------------------
// weak formulation

struct WeakResidual {
  double reaction = 0.0;  // int int |u|^p psi
  double initial = 0.0;   // int u0 psi(0)
  double forcing = 0.0;   // int int f psi
  double time_term = 0.0; // int int u psi_t
  double space_term = 0.0;// int int u Delta_X psi
  double sum() const { return reaction + initial + forcing + time_term + space_term; }
  double residual() const { return std::abs(sum()); }
};

/// Left side of the weak formulation for a trajectory: space by grid collocation,
/// time by Gauss-Legendre on each mesh interval with u linear in t. Integration
/// stops at the family horizon T (where psi vanishes).
inline WeakResidual weak_form_residual(const Trajectory& u, const TestFunctionFamily& fam, const ProblemSpec& spec) {
  const Grid& g = spec.grid;
  if (fam.dim() != g.dim()) throw std::invalid_argument("weak_form_residual: dimension mismatch");
  auto ext = fam.support_extent();
  for (std::size_t i = 0; i < g.dim(); ++i) {
    if (ext[i] > g.axis(i).half_width - g.spacing(i)) {
      throw std::invalid_argument("weak_form_residual: test-function support does not fit in the grid");
    }
  }
  if (u.mesh.start != 0.0) throw std::invalid_argument("weak_form_residual: trajectory must start at t = 0");
  const auto N = static_cast<Eigen::Index>(g.size());
  Eigen::VectorXd phi(N), lap(N);
  std::vector<double> x(g.dim());
  for (Eigen::Index k = 0; k < N; ++k) {
    g.node(static_cast<std::size_t>(k), x);
    auto s = fam.spatial(x);
    phi[k] = s.phi;
    lap[k] = s.lap;
  }
  const double W = g.cell_volume();
  const auto& tf = fam.time();
  WeakResidual r;
  r.initial = W * tf.value(0.0) * spec.u0.values.dot(phi);
  const double fphi = W * spec.f.values.dot(phi);
  const double T = std::min(fam.T(), u.mesh.node(u.mesh.J));
  const auto& gl = detail::gauss16();
  for (int j = 0; j < u.mesh.J; ++j) {
    const double a = u.mesh.node(j);
    if (a >= T) break;
    const double b = std::min(u.mesh.node(j + 1), T), full = u.mesh.step(), len = b - a;
    const Eigen::VectorXd& u0 = u.states[static_cast<std::size_t>(j)];
    const Eigen::VectorXd& u1 = u.states[static_cast<std::size_t>(j) + 1];
    for (std::size_t q = 0; q < 16; ++q) {
      double t = a + len * gl.x[q], w = len * gl.w[q];
      double th = (t - a) / full;
      Eigen::VectorXd ut = (1.0 - th) * u0 + th * u1;
      double tau = tf.value(t), dtau = tf.derivative(t);
      r.reaction += w * tau * W * ut.cwiseAbs().array().pow(spec.p).matrix().dot(phi);
      r.forcing += w * tau * fphi;
      r.time_term += w * dtau * W * ut.dot(phi);
      r.space_term += w * tau * W * ut.dot(lap);
    }
  }
  return r;
}

/// Right side of the Young split: F <= C_Y 2^(p'-1) (I_Delta + I_t) - (1/2) int int |u|^p psi - int u0 psi(0).
inline double young_split_bound(double p, double I_delta, double I_t) {
  const double pc = conjugate_exponent(p);
  return young_constant(p) * std::pow(2.0, pc - 1.0) * (I_delta + I_t);
}

}  // namespace blowlab
