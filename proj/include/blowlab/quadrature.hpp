#pragma once

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "errors.hpp"

namespace blowlab {

namespace detail {

struct GaussRule {
  std::array<double, 16> x{};  // on [0,1]
  std::array<double, 16> w{};
  GaussRule() {
    using G = boost::math::quadrature::gauss<double, 16>;
    const auto& a = G::abscissa();
    const auto& wt = G::weights();
    for (std::size_t i = 0; i < 8; ++i) {
      x[7 - i] = 0.5 * (1.0 - a[i]);
      x[8 + i] = 0.5 * (1.0 + a[i]);
      w[7 - i] = 0.5 * wt[i];
      w[8 + i] = 0.5 * wt[i];
    }
  }
};

inline const GaussRule& gauss16() {
  static const GaussRule rule;
  return rule;
}

/// g(u) = u^3 (10 - 15u + 6u^2): clusters nodes at both ends, g'(0) = g'(1) = g''(0) = g''(1) = 0.
inline double smootherstep(double u) { return u * u * u * (10.0 + u * (-15.0 + 6.0 * u)); }
inline double smootherstep_derivative(double u) { return 30.0 * u * u * (1.0 - u) * (1.0 - u); }

}  // namespace detail

/// Integral over [a,b] with `panels` equal panels in the smootherstep variable,
/// 16-point Gauss-Legendre on each.
inline double segment_integral(const std::function<double(double)>& f, double a, double b, int panels) {
  if (b <= a) return 0.0;
  const auto& g = detail::gauss16();
  const double len = b - a, du = 1.0 / panels;
  double sum = 0.0;
  for (int k = 0; k < panels; ++k) {
    double part = 0.0;
    for (std::size_t q = 0; q < 16; ++q) {
      double u = (k + g.x[q]) * du;
      part += g.w[q] * f(a + len * detail::smootherstep(u)) * detail::smootherstep_derivative(u);
    }
    sum += part * du * len;
  }
  return sum;
}

/// Region sum_i |y_i|^e_i <= outer, optionally without the part where the sum is below `inner`.
struct LevelSetDomain {
  std::vector<double> exponents;
  double outer = 2.0;
  double inner = 1.0;
  bool skip_inner = false;
  /// Oscillation rate per axis (radians per unit of y); adds panels so each covers at most half a period.
  std::vector<double> oscillation;
};

/// Iterated 1-D quadrature over a LevelSetDomain. Each axis range is split at the
/// points where the partial sum reaches `inner` and `outer` and at 0.
class LevelSetQuadrature {
 public:
  explicit LevelSetQuadrature(LevelSetDomain dom) : dom_(std::move(dom)) {
    if (dom_.exponents.empty()) throw std::invalid_argument("LevelSetQuadrature: empty domain");
    if (dom_.oscillation.empty()) dom_.oscillation.assign(dom_.exponents.size(), 0.0);
  }

  double integrate(const std::function<double(std::span<const double>)>& f, int level) const {
    std::vector<double> y(dom_.exponents.size(), 0.0);
    return axis(f, 0, 0.0, y, level);
  }

 private:
  double axis(const std::function<double(std::span<const double>)>& f, std::size_t i, double prefix,
              std::vector<double>& y, int level) const {
    const double e = dom_.exponents[i];
    if (prefix >= dom_.outer) return 0.0;
    const double b = std::pow(dom_.outer - prefix, 1.0 / e);
    std::vector<double> cuts{-b, 0.0, b};
    double c = -1.0;
    if (prefix < dom_.inner) {
      c = std::pow(dom_.inner - prefix, 1.0 / e);
      cuts.push_back(-c);
      cuts.push_back(c);
    }
    std::sort(cuts.begin(), cuts.end());
    const bool last = i + 1 == dom_.exponents.size();
    double sum = 0.0;
    for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
      double a0 = cuts[s], a1 = cuts[s + 1];
      if (a1 <= a0) continue;
      if (last && dom_.skip_inner && c > 0.0 && a0 >= -c && a1 <= c) continue;
      int panels = level;
      if (dom_.oscillation[i] > 0.0) {
        panels *= std::max(1, static_cast<int>(std::ceil(dom_.oscillation[i] * (a1 - a0) / std::numbers::pi)));
      }
      sum += segment_integral(
          [&](double yi) {
            y[i] = yi;
            if (last) return f(y);
            return axis(f, i + 1, prefix + std::pow(std::abs(yi), e), y, level);
          },
          a0, a1, panels);
    }
    return sum;
  }

  LevelSetDomain dom_;
};

struct QuadratureResult {
  double value = 0.0;
  int level = 0;
  double disagreement = 0.0;
};

/// Doubles the panel level until successive values agree to `tol` (relative).
inline QuadratureResult converge(const std::function<double(int)>& at_level, double tol, int max_level = 32) {
  double prev = at_level(1);
  for (int level = 2; level <= max_level; level *= 2) {
    double cur = at_level(level);
    double diff = std::abs(cur - prev);
    double scale = std::max(std::abs(cur), std::abs(prev));
    if (diff <= tol * scale || scale == 0.0) return {cur, level, scale == 0.0 ? 0.0 : diff / scale};
    prev = cur;
    if (level * 2 > max_level) {
      throw QuadratureNonConvergence("quadrature: panel doubling did not reach tolerance", diff / scale);
    }
  }
  throw QuadratureNonConvergence("quadrature: panel doubling did not reach tolerance", 1.0);
}

/// Surface measure of the unit sphere in R^n.
inline double sphere_area(std::size_t n) {
  const double h = 0.5 * static_cast<double>(n);
  return 2.0 * std::pow(std::numbers::pi, h) / std::tgamma(h);
}

}  // namespace blowlab
