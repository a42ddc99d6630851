#ifndef ROLLOUT_LAB_STOCHASTIC_ORDER_HPP
#define ROLLOUT_LAB_STOCHASTIC_ORDER_HPP

// Prefix masses and first-order stochastic dominance; the monotone-kernel
// checker lives here too. A distribution "dominates" when its mass sits on
// later positions.

#include "rollout_lab/kernels.hpp"
#include "rollout_lab/parallel.hpp"
#include "rollout_lab/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace rollout_lab {

/// Probability vector over token positions.
template <typename Scalar>
class PositionDistribution {
 public:
  /// Clamps entries in [-1e-15, 0) to zero; rejects anything more negative
  /// and sums farther than `sum_tol` from one.
  explicit PositionDistribution(RowVector<Scalar> probs,
                                Scalar sum_tol = Scalar(tolerance::kDistributionSum))
      : probs_(std::move(probs)) {
    if (probs_.size() < 1)
      throw Error(ErrorCode::InvalidArgument, "distribution: needs at least one position");
    Scalar sum(0);
    for (Index j = 0; j < probs_.size(); ++j) {
      Scalar& p = probs_(j);
      if (!std::isfinite(static_cast<double>(p)))
        throw Error(ErrorCode::InvariantViolation, "distribution: non-finite probability");
      if (p < Scalar(0)) {
        if (p < -Scalar(tolerance::kNegativeClamp))
          throw Error(ErrorCode::InvariantViolation,
                      "distribution: negative probability at position " + std::to_string(j + 1));
        p = Scalar(0);
      }
      sum += p;
    }
    if (std::abs(sum - Scalar(1)) > sum_tol)
      throw Error(ErrorCode::InvariantViolation,
                  "distribution: probabilities sum to " + std::to_string(static_cast<double>(sum)) +
                      ", expected 1");
  }

  static PositionDistribution point_mass(Index n, Index position) {
    RowVector<Scalar> v = RowVector<Scalar>::Zero(n);
    v(position) = Scalar(1);
    return PositionDistribution(std::move(v));
  }

  static PositionDistribution uniform(Index n) {
    return PositionDistribution(RowVector<Scalar>::Constant(n, Scalar(1) / Scalar(n)));
  }

  const RowVector<Scalar>& probs() const noexcept { return probs_; }
  Index size() const noexcept { return probs_.size(); }
  Scalar operator()(Index j) const { return probs_(j); }

 private:
  RowVector<Scalar> probs_;
};

using Distribution = PositionDistribution<double>;

/// Mass on the first k positions, 1 <= k <= n.
template <typename Scalar>
Scalar prefix_mass(const PositionDistribution<Scalar>& d, Index k) {
  if (k < 1 || k > d.size())
    throw Error(ErrorCode::InvalidArgument,
                "prefix_mass: cutoff " + std::to_string(k) + " outside 1.." + std::to_string(d.size()));
  return d.probs().head(k).sum();
}

/// All prefix masses F(1..n) of a row vector.
template <typename Derived>
RowVector<typename Derived::Scalar> prefix_masses(const Eigen::MatrixBase<Derived>& row) {
  RowVector<typename Derived::Scalar> out(row.size());
  typename Derived::Scalar acc(0);
  for (Index j = 0; j < row.size(); ++j) out(j) = acc += row(j);
  return out;
}

enum class Dominance { MuDominates, NuDominates, Equal, Incomparable };

inline const char* to_string(Dominance d) {
  switch (d) {
    case Dominance::MuDominates: return "mu_dominates";
    case Dominance::NuDominates: return "nu_dominates";
    case Dominance::Equal: return "equal";
    case Dominance::Incomparable: return "incomparable";
  }
  return "unknown";
}

/// FOSD verdict between two distributions. MuDominates means every prefix
/// mass of mu is at most that of nu (within tol) and at least one is strictly
/// smaller.
template <typename Scalar>
Dominance fosd_compare(const PositionDistribution<Scalar>& mu, const PositionDistribution<Scalar>& nu,
                       Scalar tol) {
  if (mu.size() != nu.size())
    throw Error(ErrorCode::DimensionMismatch, "fosd_compare: distributions differ in length");
  const auto fm = prefix_masses(mu.probs());
  const auto fn = prefix_masses(nu.probs());
  bool mu_below = false, nu_below = false;
  for (Index k = 0; k < fm.size(); ++k) {
    const Scalar diff = fm(k) - fn(k);
    if (diff < -tol) mu_below = true;
    if (diff > tol) nu_below = true;
  }
  if (mu_below && nu_below) return Dominance::Incomparable;
  if (mu_below) return Dominance::MuDominates;
  if (nu_below) return Dominance::NuDominates;
  return Dominance::Equal;
}

/// Aggregate of prefix-mass gaps over all triples (i < i', k).
struct MonotonicityReport {
  long long total_triples = 0;
  long long violations = 0;
  double violation_fraction = 0.0;
  double mean_conditional_gap = 0.0;  // E[gap | gap > 0]
  double max_gap = 0.0;
};

/// Counts triples (i < i', k) where row i' carries more prefix mass than row
/// i. gap = max(0, F_i'(k) - F_i(k)); a violation is gap > tol. Works on any
/// square row-stochastic matrix, including residual transitions.
template <typename Derived>
MonotonicityReport monotonicity_report(const Eigen::MatrixBase<Derived>& kernel, double tol) {
  using Scalar = typename Derived::Scalar;
  const Index n = kernel.rows();
  if (kernel.cols() != n) throw Error(ErrorCode::DimensionMismatch, "monotonicity: kernel not square");

  Matrix<Scalar> prefix(n, n);
  for (Index i = 0; i < n; ++i) prefix.row(i) = prefix_masses(kernel.row(i));

  struct Partial {
    long long violations = 0, positive = 0;
    double gap_sum = 0.0, max_gap = 0.0;
  };
  const unsigned workers = n >= 64 ? worker_count() : 1u;
  std::vector<Partial> partials(workers);
  // Partition over cutoffs k; each worker scans all (i, i') pairs for its k.
  parallel_chunks(static_cast<long>(n), workers, [&](unsigned w, long lo, long hi) {
    Partial& p = partials[w];
    for (long k = lo; k < hi; ++k)
      for (Index i = 0; i < n; ++i) {
        const Scalar base = prefix(i, k);
        for (Index ip = i + 1; ip < n; ++ip) {
          const double gap = static_cast<double>(prefix(ip, k) - base);
          if (gap > 0.0) {
            ++p.positive;
            p.gap_sum += gap;
            p.max_gap = std::max(p.max_gap, gap);
            if (gap > tol) ++p.violations;
          }
        }
      }
  });

  MonotonicityReport r;
  r.total_triples = static_cast<long long>(n) * (n - 1) / 2 * n;
  long long positive = 0;
  double gap_sum = 0.0;
  for (const auto& p : partials) {
    r.violations += p.violations;
    positive += p.positive;
    gap_sum += p.gap_sum;
    r.max_gap = std::max(r.max_gap, p.max_gap);
  }
  r.violation_fraction =
      r.total_triples > 0 ? static_cast<double>(r.violations) / static_cast<double>(r.total_triples) : 0.0;
  r.mean_conditional_gap = positive > 0 ? gap_sum / static_cast<double>(positive) : 0.0;
  return r;
}

template <typename Scalar>
MonotonicityReport check_stoch_monotone(const AttentionKernel<Scalar>& kernel,
                                        double tol = tolerance::kMonotone) {
  return monotonicity_report(kernel.matrix(), tol);
}

/// Pushforward d * K.
template <typename Scalar, typename Derived>
PositionDistribution<Scalar> apply_kernel(const PositionDistribution<Scalar>& d,
                                          const Eigen::MatrixBase<Derived>& transition) {
  if (transition.rows() != d.size() || transition.cols() != d.size())
    throw Error(ErrorCode::DimensionMismatch, "apply_kernel: transition does not match distribution length");
  return PositionDistribution<Scalar>(d.probs() * transition);
}

template <typename Scalar>
PositionDistribution<Scalar> apply_kernel(const PositionDistribution<Scalar>& d,
                                          const AttentionKernel<Scalar>& kernel) {
  return apply_kernel(d, kernel.matrix());
}

}  // namespace rollout_lab

#endif  // ROLLOUT_LAB_STOCHASTIC_ORDER_HPP
