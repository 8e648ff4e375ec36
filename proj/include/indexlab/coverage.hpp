#ifndef INDEXLAB_COVERAGE_HPP
#define INDEXLAB_COVERAGE_HPP

// Records which public operations have run in this process. The acceptance
// runner uses it to assert that every operation was exercised.

#include <array>
#include <atomic>
#include <cstddef>
#include <string_view>
#include <vector>

namespace indexlab::coverage {

enum class Op : std::size_t {
  spectral_decompose,
  matrix_function,
  fractional_resolvent_power,
  schatten_norm,
  partial_trace_first,
  iterated_commutator,
  sigma_conjugate,
  build_inner_pair,
  build_line_operators,
  assemble_schroedinger_pair,
  assemble_F,
  inner_path_operator,
  homological_index_lhs,
  rhs_integral,
  c_constant,
  witten_index_estimate,
  spectral_flow_crossings,
  check_xi_integral_identity,
  check_flow_trace_identity,
  epsilon_invariance_report,
  apply_s,
  apply_e,
  derivative_combination,
  bracket_eval,
  resolvent_derivative,
  power_series_check,
  adiabatic_isolation_gap,
  commutator_correction_check,
  laplace_resolvent_power,
  resolvent_bound_check,
  count_
};

inline constexpr std::size_t op_count = static_cast<std::size_t>(Op::count_);

inline constexpr std::array<std::string_view, op_count> op_names = {
    "spectral_decompose",        "matrix_function",
    "fractional_resolvent_power", "schatten_norm",
    "partial_trace_first",       "iterated_commutator",
    "sigma_conjugate",           "build_inner_pair",
    "build_line_operators",      "assemble_schroedinger_pair",
    "assemble_F",                "inner_path_operator",
    "homological_index_lhs",     "rhs_integral",
    "c_constant",                "witten_index_estimate",
    "spectral_flow_crossings",   "check_xi_integral_identity",
    "check_flow_trace_identity", "epsilon_invariance_report",
    "apply_s",                   "apply_e",
    "derivative_combination",    "bracket_eval",
    "resolvent_derivative",      "power_series_check",
    "adiabatic_isolation_gap",   "commutator_correction_check",
    "laplace_resolvent_power",   "resolvent_bound_check",
};

namespace detail {
inline std::array<std::atomic<bool>, op_count>& flags() {
  static std::array<std::atomic<bool>, op_count> f{};
  return f;
}
} // namespace detail

inline void touch(Op op) noexcept {
  detail::flags()[static_cast<std::size_t>(op)].store(true, std::memory_order_relaxed);
}

inline bool touched(Op op) noexcept {
  return detail::flags()[static_cast<std::size_t>(op)].load(std::memory_order_relaxed);
}

inline std::vector<std::string_view> untouched() {
  std::vector<std::string_view> out;
  for (std::size_t i = 0; i < op_count; ++i)
    if (!detail::flags()[i].load(std::memory_order_relaxed)) out.push_back(op_names[i]);
  return out;
}

inline void reset() noexcept {
  for (auto& f : detail::flags()) f.store(false, std::memory_order_relaxed);
}

} // namespace indexlab::coverage

#endif // INDEXLAB_COVERAGE_HPP
