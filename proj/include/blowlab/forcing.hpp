#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>

#include "grid.hpp"
#include "profiles.hpp"

namespace blowlab {

enum class ForcingKind { zero, gaussian, power_tail, bump, plateau };

inline std::string to_string(ForcingKind k) {
  switch (k) {
    case ForcingKind::zero: return "zero";
    case ForcingKind::gaussian: return "gaussian";
    case ForcingKind::power_tail: return "power-tail";
    case ForcingKind::bump: return "bump";
    case ForcingKind::plateau: return "plateau";
  }
  return "?";
}

inline ForcingKind parse_forcing_kind(const std::string& s) {
  if (s == "zero") return ForcingKind::zero;
  if (s == "gaussian" || s == "gaussian-bump") return ForcingKind::gaussian;
  if (s == "power-tail") return ForcingKind::power_tail;
  if (s == "bump") return ForcingKind::bump;
  if (s == "plateau") return ForcingKind::plateau;
  throw std::invalid_argument("unknown forcing '" + s + "'");
}

/// Radial source terms f(x) = eps * g(|x|).
///   gaussian:   exp(-|x|^2 / width^2)
///   power-tail: min(1, |x|^-lambda)
///   bump:       exp(1 - 1/(1 - (|x|/width)^2)) on |x| < width
///   plateau:    1 on |x| <= width, C^2 cutoff to 0 at 2 width
struct Forcing {
  ForcingKind kind = ForcingKind::zero;
  double eps = 0.0;
  double lambda = 2.0;
  double width = 1.0;

  double radial(double r) const {
    switch (kind) {
      case ForcingKind::zero: return 0.0;
      case ForcingKind::gaussian: return eps * std::exp(-r * r / (width * width));
      case ForcingKind::power_tail: return r <= 1.0 ? eps : eps * std::pow(r, -lambda);
      case ForcingKind::bump: {
        double s = r / width;
        if (s >= 1.0) return 0.0;
        return eps * std::exp(1.0 - 1.0 / (1.0 - s * s));
      }
      case ForcingKind::plateau: return eps * CutoffProfile(8)(r / width).phi;
    }
    return 0.0;
  }
  double operator()(std::span<const double> x) const {
    double r2 = 0.0;
    for (double v : x) r2 += v * v;
    return radial(std::sqrt(r2));
  }
  bool is_zero() const { return kind == ForcingKind::zero || eps == 0.0; }
  GridFunction on(const Grid& g) const {
    return sample([this](std::span<const double> x) { return (*this)(x); }, g);
  }
};

}  // namespace blowlab
