#pragma once

// Bessel functions of the first kind, integer order, by direct power series.
//
// The alternating series cancels badly for large |x|: at x = 20 the largest
// term is ~1e7 while the sum is O(0.1). Long double keeps the result well
// inside 1e-9 there; past that a 50-digit float is used.

#include <cmath>
#include <cstdlib>
#include <string>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "trance/error.hpp"

namespace trance {

inline constexpr double kBesselDomain = 50.0;
inline constexpr int kBesselMaxTerms = 80;

namespace detail {

template <class Real>
Real bessel_series(int nu, const Real& x) {
  using std::abs;
  const Real half = x / 2;
  Real term = 1;
  for (int k = 1; k <= nu; ++k) term *= half / k;  // (x/2)^nu / nu!
  Real sum = term;
  const Real q = -half * half;
  for (int r = 0; r < kBesselMaxTerms; ++r) {
    term *= q / (Real(r + 1) * Real(nu + r + 1));
    sum += term;
    if (abs(term) < Real(1e-15) * abs(sum)) break;
  }
  return sum;
}

}  // namespace detail

/// J_nu(x) for integer nu; negative orders use J_{-n} = (-1)^n J_n.
inline double bessel_j(int nu, double x) {
  require(std::isfinite(x), ErrorCode::DomainExceeded, "bessel_j argument is not finite");
  if (std::abs(x) > kBesselDomain)
    fail(ErrorCode::DomainExceeded, "bessel_j argument " + std::to_string(x) + " outside [-50, 50]");
  if (nu < 0) {
    const double v = bessel_j(-nu, x);
    return (-nu) % 2 == 0 ? v : -v;
  }
  if (x == 0.0) return nu == 0 ? 1.0 : 0.0;
  if (std::abs(x) <= 20.0) return static_cast<double>(detail::bessel_series<long double>(nu, x));
  using Wide = boost::multiprecision::cpp_bin_float_50;
  return detail::bessel_series<Wide>(nu, Wide(x)).convert_to<double>();
}

}  // namespace trance
