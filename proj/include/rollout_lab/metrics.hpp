#ifndef ROLLOUT_LAB_METRICS_HPP
#define ROLLOUT_LAB_METRICS_HPP

#include "rollout_lab/kernels.hpp"
#include "rollout_lab/stochastic_order.hpp"
#include "rollout_lab/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

namespace rollout_lab {

struct ComparisonResult {
  double spearman = 0.0;
  double wasserstein = 0.0;
  Index n = 0;
};

struct ContentFit {
  double u_hat = 0.0;
  double delta_hat = 0.0;
  double within_diag_similarity = 0.0;
  double within_offdiag_similarity = 0.0;
  Index bins = 64;
};

inline constexpr Index kDefaultBins = 64;

/// 1-based fractional ranks; ties share the mean of their positions.
template <typename Derived>
Vector<double> average_ranks(const Eigen::MatrixBase<Derived>& values) {
  const Index n = values.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return values(a) < values(b); });
  Vector<double> ranks(n);
  for (Index lo = 0; lo < n;) {
    Index hi = lo;
    while (hi + 1 < n && values(order[static_cast<std::size_t>(hi + 1)]) == values(order[static_cast<std::size_t>(lo)])) ++hi;
    const double mean = 0.5 * static_cast<double>(lo + hi) + 1.0;
    for (Index k = lo; k <= hi; ++k) ranks(order[static_cast<std::size_t>(k)]) = mean;
    lo = hi + 1;
  }
  return ranks;
}

/// Pearson correlation of average ranks.
template <typename DerivedA, typename DerivedB>
double spearman(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "spearman: lengths differ");
  if (a.size() < 2) throw Error(ErrorCode::InvalidArgument, "spearman: need at least two positions");
  Vector<double> ra = average_ranks(a), rb = average_ranks(b);
  ra.array() -= ra.mean();
  rb.array() -= rb.mean();
  const double va = ra.squaredNorm(), vb = rb.squaredNorm();
  if (va == 0.0 || vb == 0.0)
    throw Error(ErrorCode::NumericalFailure, "spearman: undefined for a constant profile");
  return std::clamp(ra.dot(rb) / std::sqrt(va * vb), -1.0, 1.0);
}

inline double spearman(const Distribution& pred, const Distribution& meas) {
  return spearman(pred.probs(), meas.probs());
}

/// 1-Wasserstein distance with ground metric |i - j| / (n - 1), via the
/// closed form on the line: mean absolute CDF gap over cutoffs 1..n-1.
inline double wasserstein(const Distribution& pred, const Distribution& meas) {
  if (pred.size() != meas.size()) throw Error(ErrorCode::DimensionMismatch, "wasserstein: lengths differ");
  const Index n = pred.size();
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "wasserstein: need at least two positions");
  double f = 0.0, g = 0.0, acc = 0.0;
  for (Index k = 0; k + 1 < n; ++k) {
    f += pred(k);
    g += meas(k);
    acc += std::abs(f - g);
  }
  return std::clamp(acc / static_cast<double>(n - 1), 0.0, 1.0);
}

inline ComparisonResult compare_profiles(const Distribution& pred, const Distribution& meas) {
  return {spearman(pred, meas), wasserstein(pred, meas), pred.size()};
}

/// 1 - H(p) / log B for the equal-width histogram of `values` over their
/// observed range. A single distinct value gives 1.
inline double shannon_similarity(std::span<const double> values, Index bins = kDefaultBins) {
  if (bins < 2) throw Error(ErrorCode::InvalidArgument, "shannon_similarity: need at least two bins");
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "shannon_similarity: no values");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return 1.0;
  std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (double v : values) {
    auto b = static_cast<Index>(std::floor((v - lo) / width));
    counts[static_cast<std::size_t>(std::clamp<Index>(b, 0, bins - 1))] += 1.0;
  }
  double h = 0.0;
  const double total = static_cast<double>(values.size());
  for (double c : counts)
    if (c > 0.0) {
      const double p = c / total;
      h -= p * std::log(p);
    }
  return std::clamp(1.0 - h / std::log(static_cast<double>(bins)), 0.0, 1.0);
}

/// Fits s_ij = u + delta [j == i] by region means over admissible entries.
template <typename Derived>
ContentFit fit_content(const Eigen::MatrixBase<Derived>& logits, const MaskSpec& mask, Index bins = kDefaultBins) {
  mask.validate();
  if (logits.rows() != mask.n || logits.cols() != mask.n)
    throw Error(ErrorCode::DimensionMismatch, "fit_content: logit matrix does not match mask length");
  if (mask.n < 2 || (mask.kind == MaskKind::SlidingWindow && mask.window < 2))
    throw Error(ErrorCode::InvalidArgument, "fit_content: no admissible off-diagonal entries");
  std::vector<double> diag, off;
  for (Index i = 0; i < mask.n; ++i)
    for (Index j = mask.first_key(i); j <= i; ++j) {
      const double v = static_cast<double>(logits(i, j));
      if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "fit_content: non-finite admissible logit");
      (i == j ? diag : off).push_back(v);
    }
  // Shifted mean: exact when a region is constant.
  auto mean = [](const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x - v.front();
    return v.front() + acc / static_cast<double>(v.size());
  };
  ContentFit fit;
  fit.bins = bins;
  fit.u_hat = mean(off);
  fit.delta_hat = mean(diag) - fit.u_hat;
  fit.within_diag_similarity = shannon_similarity(diag, bins);
  fit.within_offdiag_similarity = shannon_similarity(off, bins);
  return fit;
}

}  // namespace rollout_lab

#endif  // ROLLOUT_LAB_METRICS_HPP
