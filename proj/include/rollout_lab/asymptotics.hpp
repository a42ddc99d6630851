#ifndef ROLLOUT_LAB_ASYMPTOTICS_HPP
#define ROLLOUT_LAB_ASYMPTOTICS_HPP

// Finite-horizon witnesses of the infinite-depth dichotomy: with a uniform
// lower bound eps on admissible attention entries, a summable schedule keeps
// every diagonal entry of P(T) above prod(1 - (1 - eps) lambda_t), while a
// divergent one drives all mass to the first token at rate exp(-(j-1) eps sum lambda).

#include "rollout_lab/kernels.hpp"
#include "rollout_lab/rollout.hpp"
#include "rollout_lab/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace rollout_lab {

/// Smallest admissible entry across all kernels. Throws if any admissible
/// entry is exactly zero.
template <typename Scalar>
Scalar estimate_epsilon(std::span<const AttentionKernel<Scalar>> kernels) {
  if (kernels.empty()) throw Error(ErrorCode::InvalidArgument, "estimate_epsilon: no kernels");
  Scalar eps = std::numeric_limits<Scalar>::infinity();
  for (const auto& k : kernels) {
    const MaskSpec& mask = k.mask();
    for (Index i = 0; i < mask.n; ++i)
      for (Index j = mask.first_key(i); j <= i; ++j) {
        if (k(i, j) <= Scalar(0))
          throw Error(ErrorCode::InvariantViolation,
                      "estimate_epsilon: admissible entry (" + std::to_string(i + 1) + ", " +
                          std::to_string(j + 1) + ") is zero; attention is not bounded away from zero");
        eps = std::min(eps, k(i, j));
      }
  }
  return eps;
}

template <typename Scalar>
Scalar estimate_epsilon(const std::vector<AttentionKernel<Scalar>>& kernels) {
  return estimate_epsilon(std::span<const AttentionKernel<Scalar>>(kernels));
}

/// prod_t (1 - (1 - eps) lambda_t) over the first `depth` layers (all when depth < 0).
template <typename Scalar>
Scalar diag_lower_bound(const MixingSchedule<Scalar>& schedule, Scalar epsilon, Index depth = -1) {
  if (depth < 0) depth = schedule.depth();
  Scalar b(1);
  for (Index t = 0; t < depth; ++t) b *= Scalar(1) - (Scalar(1) - epsilon) * schedule[t];
  return b;
}

/// exp(-(j - 1) eps sum lambda) for 1-based column j.
template <typename Scalar>
Scalar collapse_envelope(Index column, Scalar epsilon, Scalar total_mixing) {
  return std::exp(-Scalar(column - 1) * epsilon * total_mixing);
}

namespace detail {
template <typename Scalar>
const Matrix<Scalar>& require_full(const RolloutResult<Scalar>& result) {
  if (!result.final)
    throw Error(ErrorCode::InvalidArgument, "dichotomy check needs the full rollout matrix (enable full_matrix)");
  return *result.final;
}
}  // namespace detail

/// P_ii >= prod(1 - (1 - eps) lambda_t) - 1e-12, per position.
template <typename Scalar>
std::vector<bool> check_noncollapse_bound(const RolloutResult<Scalar>& result,
                                          const MixingSchedule<Scalar>& schedule, Scalar epsilon) {
  const auto& p = detail::require_full(result);
  const Scalar bound = diag_lower_bound(schedule, epsilon);
  std::vector<bool> ok(static_cast<std::size_t>(p.rows()));
  for (Index i = 0; i < p.rows(); ++i) ok[static_cast<std::size_t>(i)] = p(i, i) >= bound - Scalar(1e-12);
  return ok;
}

struct CollapseCheck {
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> within;  // entries outside 1 < j <= i are true
  bool all_within = true;
  bool collapsed = false;  // P_n1 >= 1 - tol
};

/// Tests P_ij <= c' exp(-(j-1) eps sum lambda) for all 1 < j <= i and flags
/// collapse when the last row has all but `tol` of its mass on token 1.
template <typename Scalar>
CollapseCheck check_collapse_bound(const RolloutResult<Scalar>& result, const MixingSchedule<Scalar>& schedule,
                                   Scalar epsilon, Scalar c_prime, Scalar tol = Scalar(tolerance::kCollapse)) {
  if (!(c_prime >= Scalar(1))) throw Error(ErrorCode::InvalidArgument, "check_collapse_bound: c' must be >= 1");
  const auto& p = detail::require_full(result);
  const Index n = p.rows();
  const Scalar total = schedule.total();
  CollapseCheck c;
  c.within.setConstant(n, n, true);
  for (Index i = 1; i < n; ++i)
    for (Index j = 1; j <= i; ++j) {
      const bool ok = p(i, j) <= c_prime * collapse_envelope(j + 1, epsilon, total);
      c.within(i, j) = ok;
      c.all_within = c.all_within && ok;
    }
  c.collapsed = p(n - 1, 0) >= Scalar(1) - tol;
  return c;
}

/// Smallest c' for which the envelope holds; entries restricted to the
/// diagonal when `diagonal_only`.
template <typename Scalar>
Scalar fit_c_prime(const RolloutResult<Scalar>& result, const MixingSchedule<Scalar>& schedule, Scalar epsilon,
                   bool diagonal_only = false) {
  const auto& p = detail::require_full(result);
  const Scalar total = schedule.total();
  Scalar c(0);
  for (Index i = 1; i < p.rows(); ++i)
    for (Index j = diagonal_only ? i : 1; j <= i; ++j)
      if (p(i, j) > Scalar(0))
        c = std::max(c, std::exp(std::log(p(i, j)) + Scalar(j) * epsilon * total));
  return c;
}

enum class Verdict { NonCollapse, Collapse, Undetermined };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::NonCollapse: return "non_collapse";
    case Verdict::Collapse: return "collapse";
    case Verdict::Undetermined: return "undetermined";
  }
  return "unknown";
}

struct OffdiagEnvelope {
  double c_prime = 1.0;
  std::vector<double> exponents;  // (j - 1) eps sum lambda for j = 1..n
};

struct DichotomyReport {
  double epsilon = 0.0;
  double cumulative_mixing = 0.0;
  std::vector<double> diag_lower_bound;  // one entry per position
  OffdiagEnvelope offdiag_upper_bound;
  Verdict verdict = Verdict::Undetermined;
};

struct BoundCheckpoint {
  Index depth;
  double cumulative_mixing;
  double bound;
  double observed_diag_min;
  double p_n1;
};

struct DichotomyRun {
  DichotomyReport report;
  std::vector<BoundCheckpoint> checkpoints;
  MatrixXd final;
};

/// Depths 1, 2, 4, ... plus the horizon itself.
inline std::vector<Index> log_checkpoints(Index horizon) {
  std::vector<Index> d;
  for (Index t = 1; t < horizon; t *= 2) d.push_back(t);
  d.push_back(horizon);
  return d;
}

/// Runs a long rollout and classifies it. Collapse: P_n1 >= 1 - tol at the
/// horizon. NonCollapse: the diagonal bound exceeds tol and moved less than
/// `stable_tol` over the second half of the horizon. Otherwise Undetermined.
/// The verdict is a statement about the supplied horizon only.
inline DichotomyRun dichotomy(const std::function<const MatrixXd&(Index)>& kernel_at, const MaskSpec& mask,
                              const MixingSchedule<double>& schedule, double epsilon,
                              double tol = tolerance::kCollapse, double stable_tol = 1e-6) {
  const Index n = mask.n;
  const Index horizon = schedule.depth();
  const auto marks = log_checkpoints(horizon);
  DichotomyRun run;
  double cumulative = 0.0, bound = 1.0, bound_half = 1.0;
  std::size_t next = 0;
  run.final = accumulate_rollout<double>(
      n, horizon, kernel_at, [&](Index t) { return schedule[t]; },
      [&](Index t, const MatrixXd& p) {
        cumulative += schedule[t];
        bound *= 1.0 - (1.0 - epsilon) * schedule[t];
        if (t + 1 == horizon / 2) bound_half = bound;
        if (next < marks.size() && marks[next] == t + 1) {
          run.checkpoints.push_back({t + 1, cumulative, bound, p.diagonal().minCoeff(), p(n - 1, 0)});
          ++next;
        }
      });
  if (horizon < 2) bound_half = 1.0;

  DichotomyReport& r = run.report;
  r.epsilon = epsilon;
  r.cumulative_mixing = cumulative;
  r.diag_lower_bound.assign(static_cast<std::size_t>(n), bound);
  r.offdiag_upper_bound.exponents.resize(static_cast<std::size_t>(n));
  double c = 1.0;
  for (Index j = 0; j < n; ++j) r.offdiag_upper_bound.exponents[static_cast<std::size_t>(j)] = double(j) * epsilon * cumulative;
  for (Index i = 1; i < n; ++i)
    for (Index j = 1; j <= i; ++j)
      if (run.final(i, j) > 0.0)
        c = std::max(c, std::exp(std::log(run.final(i, j)) + double(j) * epsilon * cumulative));
  r.offdiag_upper_bound.c_prime = c;

  if (run.final(n - 1, 0) >= 1.0 - tol)
    r.verdict = Verdict::Collapse;
  else if (bound > tol && bound_half - bound < stable_tol)
    r.verdict = Verdict::NonCollapse;
  else
    r.verdict = Verdict::Undetermined;
  return run;
}

}  // namespace rollout_lab

#endif  // ROLLOUT_LAB_ASYMPTOTICS_HPP
