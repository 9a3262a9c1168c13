#pragma once

#include <cmath>
#include <numbers>

namespace mdgc {

inline constexpr double two_pi = 2.0 * std::numbers::pi_v<double>;

// Map any angle to [0, 2*pi).
inline double wrap_2pi(double a) {
  double r = std::fmod(a, two_pi);
  if (r < 0)
    r += two_pi;
  if (r >= two_pi) // fmod rounding can land exactly on 2*pi
    r -= two_pi;
  return r;
}

// Map any angle to (-pi, pi]. The +pi boundary maps to +pi, so an exactly
// opposite pair of angles resolves to the counter-clockwise sweep.
inline double wrap_pm_pi(double a) {
  double r = std::fmod(a, two_pi);
  if (r > std::numbers::pi_v<double>)
    r -= two_pi;
  else if (r <= -std::numbers::pi_v<double>)
    r += two_pi;
  return r;
}

// Angular interpolation along the smaller of the two sectors between a1 and
// a2. An exact half-turn gap is resolved counter-clockwise from a1
// (wrap_pm_pi maps it to +pi). mix(0, a1, a2) = a1, mix(1, a1, a2) = a2.
inline double mix_angle(double t, double a1, double a2) {
  return wrap_2pi(a1 + t * wrap_pm_pi(a2 - a1));
}

// Absolute angular distance, in [0, pi].
inline double angle_dist(double a, double b) {
  return std::abs(wrap_pm_pi(a - b));
}

} // namespace mdgc
