#ifndef INDEXLAB_PROFILE_HPP
#define INDEXLAB_PROFILE_HPP

// Interpolating profiles h with exactly constant tails beyond a cutoff K,
// and their rescalings h_eps(t) = h(eps * t).

#include <cmath>
#include <string>

#include "error.hpp"

namespace indexlab {

namespace detail {

// exp(-1/x) for x > 0, 0 otherwise.
inline double flat_exp(double x) { return x > 0.0 ? std::exp(-1.0 / x) : 0.0; }
inline double flat_exp_derivative(double x) { return x > 0.0 ? std::exp(-1.0 / x) / (x * x) : 0.0; }

// C-infinity step: 0 for x <= 0, 1 for x >= 1.
inline double smooth_step(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double a = flat_exp(x);
  const double b = flat_exp(1.0 - x);
  return a / (a + b);
}

inline double smooth_step_derivative(double x) {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  const double a = flat_exp(x);
  const double b = flat_exp(1.0 - x);
  const double da = flat_exp_derivative(x);
  const double db = flat_exp_derivative(1.0 - x);
  const double s = a + b;
  return (da * b + a * db) / (s * s);
}

} // namespace detail

enum class ProfileKind { tanh_clamped, smoothed_step, constant };

inline std::string to_string(ProfileKind k) {
  switch (k) {
    case ProfileKind::tanh_clamped: return "tanh-clamped";
    case ProfileKind::smoothed_step: return "smoothed-step";
    case ProfileKind::constant: return "constant";
  }
  return "?";
}

/// Smooth interpolating function with h(t) = h_plus for t >= K/eps and
/// h(t) = h_minus for t <= -K/eps.
///
/// tanh-clamped: tanh(t) glued to sign(t) over K/2 <= |t| <= K by a flat
/// C-infinity step, then mapped affinely onto [h_minus, h_plus].
/// smoothed-step: a single flat C-infinity step across [-K, K].
class Profile {
public:
  static Profile tanh_clamped(double h_minus, double h_plus, double cutoff = 8.0) {
    return Profile(ProfileKind::tanh_clamped, h_minus, h_plus, cutoff, 1.0);
  }
  static Profile smoothed_step(double h_minus, double h_plus, double cutoff = 8.0) {
    return Profile(ProfileKind::smoothed_step, h_minus, h_plus, cutoff, 1.0);
  }
  static Profile constant(double value, double cutoff = 8.0) {
    return Profile(ProfileKind::constant, value, value, cutoff, 1.0);
  }

  ProfileKind kind() const noexcept { return kind_; }
  double h_minus() const noexcept { return h_minus_; }
  double h_plus() const noexcept { return h_plus_; }
  /// Cutoff of the unscaled profile.
  double base_cutoff() const noexcept { return cutoff_; }
  double epsilon() const noexcept { return epsilon_; }
  /// Cutoff of this (possibly rescaled) profile, K / eps.
  double cutoff() const noexcept { return cutoff_ / epsilon_; }

  /// h_eps with eps multiplied into the current scale.
  Profile rescaled(double eps) const {
    if (!(eps > 0.0)) throw ParameterError("profile rescaling requires eps > 0");
    return Profile(kind_, h_minus_, h_plus_, cutoff_, epsilon_ * eps);
  }

  double operator()(double t) const { return value(t); }

  double value(double t) const {
    const double u = unit_shape(epsilon_ * t);
    if (u == 1.0) return h_plus_;
    if (u == -1.0) return h_minus_;
    return 0.5 * (h_plus_ + h_minus_) + 0.5 * (h_plus_ - h_minus_) * u;
  }

  double derivative(double t) const {
    const double s = epsilon_ * t;
    return epsilon_ * 0.5 * (h_plus_ - h_minus_) * unit_shape_derivative(s);
  }

private:
  Profile(ProfileKind kind, double h_minus, double h_plus, double cutoff, double eps)
      : kind_(kind), h_minus_(h_minus), h_plus_(h_plus), cutoff_(cutoff), epsilon_(eps) {
    if (!(cutoff > 0.0)) throw ParameterError("profile cutoff must be positive");
    if (!(eps > 0.0)) throw ParameterError("profile scale must be positive");
  }

  // odd shape running from -1 to 1
  double unit_shape(double s) const {
    switch (kind_) {
      case ProfileKind::constant: return 0.0;
      case ProfileKind::smoothed_step:
        return 2.0 * detail::smooth_step((s + cutoff_) / (2.0 * cutoff_)) - 1.0;
      case ProfileKind::tanh_clamped: {
        const double a = std::abs(s);
        const double half = 0.5 * cutoff_;
        const double blend = detail::smooth_step((a - half) / half);
        const double sign = s > 0.0 ? 1.0 : (s < 0.0 ? -1.0 : 0.0);
        return (1.0 - blend) * std::tanh(s) + blend * sign;
      }
    }
    return 0.0;
  }

  double unit_shape_derivative(double s) const {
    switch (kind_) {
      case ProfileKind::constant: return 0.0;
      case ProfileKind::smoothed_step:
        return 2.0 * detail::smooth_step_derivative((s + cutoff_) / (2.0 * cutoff_)) /
               (2.0 * cutoff_);
      case ProfileKind::tanh_clamped: {
        const double a = std::abs(s);
        const double half = 0.5 * cutoff_;
        const double blend = detail::smooth_step((a - half) / half);
        const double dblend = detail::smooth_step_derivative((a - half) / half) / half;
        const double sech = 1.0 / std::cosh(s);
        return (1.0 - blend) * sech * sech + dblend * (1.0 - std::tanh(a));
      }
    }
    return 0.0;
  }

  ProfileKind kind_;
  double h_minus_;
  double h_plus_;
  double cutoff_;
  double epsilon_;
};

} // namespace indexlab

#endif // INDEXLAB_PROFILE_HPP
