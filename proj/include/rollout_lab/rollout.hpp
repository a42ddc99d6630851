#ifndef ROLLOUT_LAB_ROLLOUT_HPP
#define ROLLOUT_LAB_ROLLOUT_HPP

// Residual-aware rollout P(T) = R(T) ... R(1) with R(t) = (1 - lambda_t) I + lambda_t A(t).

#include "rollout_lab/kernels.hpp"
#include "rollout_lab/stochastic_order.hpp"
#include "rollout_lab/types.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rollout_lab {

/// Per-layer residual mixing coefficients, each in [0, 1].
template <typename Scalar>
class MixingSchedule {
 public:
  explicit MixingSchedule(std::vector<Scalar> lambdas) : lambdas_(std::move(lambdas)) {
    if (lambdas_.empty()) throw Error(ErrorCode::InvalidArgument, "schedule: depth must be positive");
    for (std::size_t t = 0; t < lambdas_.size(); ++t) {
      const Scalar l = lambdas_[t];
      if (!(l >= Scalar(0) && l <= Scalar(1)))
        throw Error(ErrorCode::InvariantViolation, "schedule: lambda at layer " + std::to_string(t + 1) +
                                                       " is outside [0, 1]");
    }
  }

  static MixingSchedule constant(Index depth, Scalar lambda) {
    return MixingSchedule(std::vector<Scalar>(static_cast<std::size_t>(std::max<Index>(depth, 0)), lambda));
  }

  /// Linear ramp from `first` at layer 1 to `last` at layer T.
  static MixingSchedule linear(Index depth, Scalar first, Scalar last) {
    std::vector<Scalar> l(static_cast<std::size_t>(std::max<Index>(depth, 0)));
    for (Index t = 0; t < depth; ++t)
      l[static_cast<std::size_t>(t)] =
          depth == 1 ? first : first + (last - first) * Scalar(t) / Scalar(depth - 1);
    return MixingSchedule(std::move(l));
  }

  Index depth() const noexcept { return static_cast<Index>(lambdas_.size()); }
  Scalar operator[](Index t) const { return lambdas_[static_cast<std::size_t>(t)]; }
  const std::vector<Scalar>& lambdas() const noexcept { return lambdas_; }

  Scalar total() const {
    Scalar s(0);
    for (Scalar l : lambdas_) s += l;
    return s;
  }

  friend bool operator==(const MixingSchedule&, const MixingSchedule&) = default;

 private:
  std::vector<Scalar> lambdas_;
};

enum class Variant { AttentionOnly, ResidualAware, ResidualAwareWithContent };

inline const char* variant_tag(Variant v) {
  switch (v) {
    case Variant::AttentionOnly: return "a";
    case Variant::ResidualAware: return "b";
    case Variant::ResidualAwareWithContent: return "c";
  }
  return "?";
}

template <typename Scalar>
struct RolloutConfig {
  MaskSpec mask;
  std::vector<LayerLogitModel<Scalar>> layers;
  MixingSchedule<Scalar> schedule = MixingSchedule<Scalar>::constant(1, Scalar(1));
  Variant variant = Variant::ResidualAware;

  Index depth() const noexcept { return static_cast<Index>(layers.size()); }

  void validate() const {
    mask.validate();
    if (layers.empty()) throw Error(ErrorCode::InvalidArgument, "config: no layers");
    if (schedule.depth() != depth())
      throw Error(ErrorCode::DimensionMismatch, "config: schedule length " +
                                                    std::to_string(schedule.depth()) +
                                                    " differs from layer count " + std::to_string(depth()));
    for (const auto& l : layers) l.validate();
  }

  /// Layer t after the variant's forcing: variants a and b drop content.
  LayerLogitModel<Scalar> effective_layer(Index t) const {
    LayerLogitModel<Scalar> l = layers[static_cast<std::size_t>(t)];
    if (variant != Variant::ResidualAwareWithContent) l.content = {};
    return l;
  }

  /// Variant a pins every lambda to one.
  Scalar effective_lambda(Index t) const {
    return variant == Variant::AttentionOnly ? Scalar(1) : schedule[t];
  }
};

template <typename Scalar>
struct RolloutResult {
  std::optional<Matrix<Scalar>> final;  // P(T); present only with full-matrix output
  std::vector<PositionDistribution<Scalar>> trajectory;  // last row after layers 1..T
  std::string config_digest;

  Index size() const { return trajectory.empty() ? 0 : trajectory.front().size(); }
  Index depth() const { return static_cast<Index>(trajectory.size()); }
  const PositionDistribution<Scalar>& last() const { return trajectory.back(); }
};

struct RolloutOptions {
  bool full_matrix = false;
};

/// (1 - lambda) I + lambda A.
template <typename Derived>
Matrix<typename Derived::Scalar> residual_step(const Eigen::MatrixBase<Derived>& kernel,
                                               typename Derived::Scalar lambda) {
  using Scalar = typename Derived::Scalar;
  if (!(lambda >= Scalar(0) && lambda <= Scalar(1)))
    throw Error(ErrorCode::InvalidArgument, "residual_step: lambda outside [0, 1]");
  Matrix<Scalar> r = lambda * kernel;
  r.diagonal().array() += Scalar(1) - lambda;
  return r;
}

template <typename Scalar>
Matrix<Scalar> residual_step(const AttentionKernel<Scalar>& kernel, Scalar lambda) {
  return residual_step(kernel.matrix(), lambda);
}

namespace detail {

inline void fnv1a(std::uint64_t& h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
}

template <typename T>
void fnv1a_value(std::uint64_t& h, const T& v) {
  const double d = static_cast<double>(v);
  fnv1a(h, &d, sizeof d);
}

}  // namespace detail

/// Stable identifier of the effective (post-forcing) configuration.
template <typename Scalar>
std::string config_digest(const RolloutConfig<Scalar>& config) {
  std::uint64_t h = 14695981039346656037ull;
  detail::fnv1a_value(h, static_cast<int>(config.mask.kind));
  detail::fnv1a_value(h, config.mask.n);
  detail::fnv1a_value(h, config.mask.window);
  detail::fnv1a_value(h, static_cast<int>(config.variant));
  for (Index t = 0; t < config.depth(); ++t) {
    const auto layer = config.effective_layer(t);
    detail::fnv1a_value(h, config.effective_lambda(t));
    detail::fnv1a_value(h, layer.heads);
    detail::fnv1a_value(h, static_cast<int>(layer.bias.kind));
    for (Scalar m : layer.bias.slopes) detail::fnv1a_value(h, m);
    for (const auto& table : layer.bias.tables)
      for (Index k = 0; k < table.size(); ++k) detail::fnv1a_value(h, table.data()[k]);
    detail::fnv1a_value(h, layer.content.u);
    detail::fnv1a_value(h, layer.content.delta);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Streams the lower-triangular product P(t) = R(t) P(t-1), t = 1..depth.
/// kernel_at(t) and lambda_at(t) supply layer t (0-based); on_layer(t, P)
/// observes every accumulated product. Rows drifting more than 1e-12 from
/// unit sum are renormalized; drift beyond 1e-9 is an invariant breach.
template <typename Scalar, typename KernelAt, typename LambdaAt, typename OnLayer>
Matrix<Scalar> accumulate_rollout(Index n, Index depth, KernelAt&& kernel_at, LambdaAt&& lambda_at,
                                  OnLayer&& on_layer) {
  Matrix<Scalar> product = Matrix<Scalar>::Identity(n, n);
  for (Index t = 0; t < depth; ++t) {
    const auto& a = kernel_at(t);
    if (a.rows() != n || a.cols() != n)
      throw Error(ErrorCode::DimensionMismatch, "rollout: layer " + std::to_string(t + 1) + " has wrong size");
    const Matrix<Scalar> r = residual_step(a, static_cast<Scalar>(lambda_at(t)));
    product = (r.template triangularView<Eigen::Lower>() * product).eval();

    for (Index i = 0; i < n; ++i) {
      const Scalar s = product.row(i).sum();
      if (!(std::abs(s - Scalar(1)) <= Scalar(tolerance::kDistributionSum)))
        throw Error(ErrorCode::InvariantViolation,
                    "rollout: row " + std::to_string(i + 1) + " of P(" + std::to_string(t + 1) +
                        ") lost stochasticity");
      if (std::abs(s - Scalar(1)) > Scalar(tolerance::kRowSum)) product.row(i) /= s;
    }
    on_layer(t, static_cast<const Matrix<Scalar>&>(product));
  }
  return product;
}

/// Rollout over explicit per-layer kernels, recording row n after every layer.
template <typename Scalar>
RolloutResult<Scalar> rollout_kernels(std::span<const Matrix<Scalar>> kernels,
                                      const MixingSchedule<Scalar>& schedule,
                                      const RolloutOptions& options = {}) {
  if (kernels.empty()) throw Error(ErrorCode::InvalidArgument, "rollout: no layers");
  if (static_cast<Index>(kernels.size()) != schedule.depth())
    throw Error(ErrorCode::DimensionMismatch, "rollout: schedule length differs from layer count");
  const Index n = kernels.front().rows();
  RolloutResult<Scalar> result;
  result.trajectory.reserve(kernels.size());
  Matrix<Scalar> product = accumulate_rollout<Scalar>(
      n, schedule.depth(), [&](Index t) -> const Matrix<Scalar>& { return kernels[static_cast<std::size_t>(t)]; },
      [&](Index t) { return schedule[t]; },
      [&](Index, const Matrix<Scalar>& p) { result.trajectory.emplace_back(p.row(n - 1)); });
  if (options.full_matrix) result.final = std::move(product);
  return result;
}

template <typename Scalar>
RolloutResult<Scalar> rollout_kernels(const std::vector<Matrix<Scalar>>& kernels,
                                      const MixingSchedule<Scalar>& schedule,
                                      const RolloutOptions& options = {}) {
  return rollout_kernels(std::span<const Matrix<Scalar>>(kernels), schedule, options);
}

/// Per-layer head-averaged kernels after the variant's forcing.
template <typename Scalar>
std::vector<Matrix<Scalar>> layer_kernels(const RolloutConfig<Scalar>& config) {
  config.validate();
  std::vector<Matrix<Scalar>> out;
  out.reserve(static_cast<std::size_t>(config.depth()));
  for (Index t = 0; t < config.depth(); ++t)
    out.push_back(build_layer_kernel(config.effective_layer(t), config.mask).matrix());
  return out;
}

template <typename Scalar>
std::vector<Scalar> effective_lambdas(const RolloutConfig<Scalar>& config) {
  std::vector<Scalar> l;
  for (Index t = 0; t < config.depth(); ++t) l.push_back(config.effective_lambda(t));
  return l;
}

template <typename Scalar>
RolloutResult<Scalar> run_rollout(const RolloutConfig<Scalar>& config, const RolloutOptions& options = {}) {
  auto result = rollout_kernels(layer_kernels(config), MixingSchedule<Scalar>(effective_lambdas(config)), options);
  result.config_digest = config_digest(config);
  return result;
}

template <typename Scalar>
struct DriftReport {
  std::vector<Scalar> series;  // prefix mass at depth 1..T
  bool monotone_nondecreasing = true;
};

/// Prefix mass of the first k positions along the trajectory, 1 <= k < n.
template <typename Scalar>
DriftReport<Scalar> drift_report(std::span<const PositionDistribution<Scalar>> trajectory, Index k,
                                 Scalar tol = Scalar(tolerance::kRowSum)) {
  if (trajectory.empty()) throw Error(ErrorCode::InvalidArgument, "drift_report: empty trajectory");
  const Index n = trajectory.front().size();
  if (k < 1 || k >= n)
    throw Error(ErrorCode::InvalidArgument, "drift_report: cutoff must lie in 1.." + std::to_string(n - 1));
  DriftReport<Scalar> r;
  for (const auto& d : trajectory) {
    const Scalar m = prefix_mass(d, k);
    if (!r.series.empty() && m < r.series.back() - tol) r.monotone_nondecreasing = false;
    r.series.push_back(m);
  }
  return r;
}

template <typename Scalar>
DriftReport<Scalar> drift_report(const std::vector<PositionDistribution<Scalar>>& trajectory, Index k,
                                 Scalar tol = Scalar(tolerance::kRowSum)) {
  return drift_report(std::span<const PositionDistribution<Scalar>>(trajectory), k, tol);
}

template <typename Scalar>
struct ScheduleComparison {
  Scalar smaller_schedule_mass;  // prefix mass at depth T under the pointwise-smaller schedule
  Scalar larger_schedule_mass;
};

/// Runs `config` under its own schedule and under `other`, returning the depth-T
/// prefix masses ordered by schedule strength.
template <typename Scalar>
ScheduleComparison<Scalar> compare_schedules(const RolloutConfig<Scalar>& config,
                                             const MixingSchedule<Scalar>& other, Index k) {
  if (config.variant == Variant::AttentionOnly)
    throw Error(ErrorCode::InvalidArgument, "compare_schedules: variant a ignores the schedule");
  if (other.depth() != config.schedule.depth())
    throw Error(ErrorCode::DimensionMismatch, "compare_schedules: schedules differ in length");
  bool own_le = true, other_le = true;
  for (Index t = 0; t < other.depth(); ++t) {
    if (config.schedule[t] > other[t]) own_le = false;
    if (other[t] > config.schedule[t]) other_le = false;
  }
  if (!own_le && !other_le)
    throw Error(ErrorCode::InvalidArgument, "compare_schedules: schedules are not pointwise comparable");

  const auto kernels = layer_kernels(config);
  const auto own = rollout_kernels(kernels, config.schedule);
  const auto alt = rollout_kernels(kernels, other);
  const Scalar own_mass = prefix_mass(own.last(), k);
  const Scalar alt_mass = prefix_mass(alt.last(), k);
  if (own_le) return {own_mass, alt_mass};
  return {alt_mass, own_mass};
}

}  // namespace rollout_lab

#endif  // ROLLOUT_LAB_ROLLOUT_HPP
