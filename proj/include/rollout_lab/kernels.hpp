#ifndef ROLLOUT_LAB_KERNELS_HPP
#define ROLLOUT_LAB_KERNELS_HPP

// Masked row-stochastic attention kernels.
//
// Positions are 0-based inside this library (Eigen indexing); every file
// format and CLI surface translates to 1-based positions at the boundary.

#include "rollout_lab/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rollout_lab {

enum class MaskKind { Causal, SlidingWindow };

struct MaskSpec {
  MaskKind kind = MaskKind::Causal;
  Index n = 0;
  Index window = 0;  // used only by SlidingWindow

  static MaskSpec causal(Index n) {
    MaskSpec m{MaskKind::Causal, n, 0};
    m.validate();
    return m;
  }

  static MaskSpec sliding(Index n, Index window) {
    MaskSpec m{MaskKind::SlidingWindow, n, window};
    m.validate();
    return m;
  }

  void validate() const {
    if (n < 1) throw Error(ErrorCode::InvalidArgument, "mask: sequence length must be positive");
    if (kind == MaskKind::SlidingWindow && window < 1)
      throw Error(ErrorCode::InvalidArgument, "mask: sliding window must be positive");
  }

  /// First admissible key of query row i.
  Index first_key(Index i) const {
    return kind == MaskKind::Causal ? Index{0} : std::max<Index>(0, i - window + 1);
  }

  bool admits(Index i, Index j) const { return j <= i && j >= first_key(i); }

  friend bool operator==(const MaskSpec& a, const MaskSpec& b) {
    if (a.kind != b.kind || a.n != b.n) return false;
    return a.kind == MaskKind::Causal || a.window == b.window;
  }
};

enum class BiasKind { None, ALiBi, Tabular };

/// Additive positional logits b_ij, one set per head.
template <typename Scalar>
struct BiasModel {
  BiasKind kind = BiasKind::None;
  std::vector<Scalar> slopes;
  std::vector<Matrix<Scalar>> tables;

  static BiasModel none() { return {}; }

  static BiasModel alibi(std::vector<Scalar> slopes) {
    for (Scalar m : slopes)
      if (!(m >= Scalar(0)) || !std::isfinite(static_cast<double>(m)))
        throw Error(ErrorCode::InvalidArgument, "alibi: slopes must be finite and nonnegative");
    return {BiasKind::ALiBi, std::move(slopes), {}};
  }

  static BiasModel tabular(std::vector<Matrix<Scalar>> tables) {
    return {BiasKind::Tabular, {}, std::move(tables)};
  }

  Scalar value(Index head, Index i, Index j) const {
    switch (kind) {
      case BiasKind::None: return Scalar(0);
      case BiasKind::ALiBi: return -slopes[static_cast<std::size_t>(head)] * Scalar(i - j);
      case BiasKind::Tabular: return tables[static_cast<std::size_t>(head)](i, j);
    }
    return Scalar(0);
  }
};

/// Constant-plus-diagonal content logits: s_ij = u + delta * [j == i].
template <typename Scalar>
struct ContentModel {
  Scalar u = Scalar(0);
  Scalar delta = Scalar(0);
};

template <typename Scalar>
struct LayerLogitModel {
  BiasModel<Scalar> bias;
  ContentModel<Scalar> content;
  Index heads = 1;

  void validate() const {
    if (heads < 1) throw Error(ErrorCode::InvalidArgument, "layer: head count must be positive");
    if (bias.kind == BiasKind::ALiBi && static_cast<Index>(bias.slopes.size()) != heads)
      throw Error(ErrorCode::DimensionMismatch, "layer: ALiBi slope count must equal head count");
    if (bias.kind == BiasKind::Tabular && static_cast<Index>(bias.tables.size()) != heads)
      throw Error(ErrorCode::DimensionMismatch, "layer: tabular bias needs one table per head");
    if (!std::isfinite(static_cast<double>(content.u)) ||
        !std::isfinite(static_cast<double>(content.delta)))
      throw Error(ErrorCode::InvalidArgument, "layer: content constants must be finite");
  }
};

/// An n x n row-stochastic matrix whose support lies inside its mask.
template <typename Scalar>
class AttentionKernel {
 public:
  /// Validates and wraps a dense matrix. Off-mask entries must be zero (up to
  /// `tol`, after which they are set to exactly zero); rows must sum to one
  /// within `tol`.
  static AttentionKernel from_matrix(Matrix<Scalar> m, const MaskSpec& mask,
                                     Scalar tol = Scalar(tolerance::kRowSum)) {
    mask.validate();
    if (m.rows() != mask.n || m.cols() != mask.n)
      throw Error(ErrorCode::DimensionMismatch, "kernel: matrix is " + std::to_string(m.rows()) +
                                                    "x" + std::to_string(m.cols()) +
                                                    " but mask length is " + std::to_string(mask.n));
    for (Index i = 0; i < m.rows(); ++i) {
      Scalar sum(0);
      for (Index j = 0; j < m.cols(); ++j) {
        Scalar& x = m(i, j);
        if (!std::isfinite(static_cast<double>(x)))
          throw Error(ErrorCode::InvariantViolation, "kernel: non-finite entry");
        if (!mask.admits(i, j)) {
          if (std::abs(x) > tol)
            throw Error(ErrorCode::InvariantViolation,
                        "kernel: nonzero entry outside the mask at row " + std::to_string(i + 1));
          x = Scalar(0);
        } else if (x < Scalar(0)) {
          if (x < -tol)
            throw Error(ErrorCode::InvariantViolation,
                        "kernel: negative entry at row " + std::to_string(i + 1));
          x = Scalar(0);
        }
        sum += x;
      }
      if (std::abs(sum - Scalar(1)) > tol)
        throw Error(ErrorCode::InvariantViolation,
                    "kernel: row " + std::to_string(i + 1) + " sums to " +
                        std::to_string(static_cast<double>(sum)));
    }
    return AttentionKernel(std::move(m), mask);
  }

  const Matrix<Scalar>& matrix() const noexcept { return matrix_; }
  const MaskSpec& mask() const noexcept { return mask_; }
  Index size() const noexcept { return mask_.n; }
  Scalar operator()(Index i, Index j) const { return matrix_(i, j); }

 private:
  AttentionKernel(Matrix<Scalar> m, const MaskSpec& mask) : matrix_(std::move(m)), mask_(mask) {}

  Matrix<Scalar> matrix_;
  MaskSpec mask_;
};

using Kernel = AttentionKernel<double>;

namespace detail {

// Softmax over the admissible keys of each row; off-mask entries stay exactly 0.
template <typename Scalar, typename LogitFn>
Matrix<Scalar> masked_softmax(const MaskSpec& mask, LogitFn&& logit) {
  const Index n = mask.n;
  Matrix<Scalar> out = Matrix<Scalar>::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    const Index lo = mask.first_key(i);
    Scalar peak = -std::numeric_limits<Scalar>::infinity();
    for (Index j = lo; j <= i; ++j) {
      const Scalar l = logit(i, j);
      if (!std::isfinite(static_cast<double>(l)))
        throw Error(ErrorCode::NumericalFailure,
                    "kernel: non-finite logit at (" + std::to_string(i + 1) + ", " +
                        std::to_string(j + 1) + ")");
      out(i, j) = l;
      peak = std::max(peak, l);
    }
    Scalar norm(0);
    for (Index j = lo; j <= i; ++j) {
      out(i, j) = std::exp(out(i, j) - peak);
      norm += out(i, j);
    }
    out.row(i).segment(lo, i - lo + 1) /= norm;
  }
  return out;
}

}  // namespace detail

/// Masked row-wise softmax of the logits u + delta*[j==i] + b_ij for one head.
template <typename Scalar>
AttentionKernel<Scalar> build_kernel(const LayerLogitModel<Scalar>& model, const MaskSpec& mask,
                                     Index head) {
  model.validate();
  mask.validate();
  if (head < 0 || head >= model.heads)
    throw Error(ErrorCode::InvalidArgument, "build_kernel: head index out of range");
  if (model.bias.kind == BiasKind::Tabular) {
    const auto& table = model.bias.tables[static_cast<std::size_t>(head)];
    if (table.rows() != mask.n || table.cols() != mask.n)
      throw Error(ErrorCode::DimensionMismatch, "build_kernel: bias table does not match mask length");
  }
  const auto& c = model.content;
  auto logit = [&](Index i, Index j) {
    return c.u + (i == j ? c.delta : Scalar(0)) + model.bias.value(head, i, j);
  };
  return AttentionKernel<Scalar>::from_matrix(detail::masked_softmax<Scalar>(mask, logit), mask,
                                              Scalar(tolerance::kRowSum));
}

/// Entrywise mean of same-mask kernels.
template <typename Scalar>
AttentionKernel<Scalar> average_heads(std::span<const AttentionKernel<Scalar>> kernels) {
  if (kernels.empty()) throw Error(ErrorCode::InvalidArgument, "average_heads: no kernels");
  const MaskSpec& mask = kernels.front().mask();
  Matrix<Scalar> sum = Matrix<Scalar>::Zero(mask.n, mask.n);
  for (const auto& k : kernels) {
    if (!(k.mask() == mask))
      throw Error(ErrorCode::DimensionMismatch, "average_heads: kernels disagree on mask or length");
    sum += k.matrix();
  }
  sum /= Scalar(static_cast<double>(kernels.size()));
  return AttentionKernel<Scalar>::from_matrix(std::move(sum), mask, Scalar(tolerance::kRowSum));
}

template <typename Scalar>
AttentionKernel<Scalar> average_heads(const std::vector<AttentionKernel<Scalar>>& kernels) {
  return average_heads(std::span<const AttentionKernel<Scalar>>(kernels));
}

/// Uniform head average of every head in the layer.
template <typename Scalar>
AttentionKernel<Scalar> build_layer_kernel(const LayerLogitModel<Scalar>& model,
                                           const MaskSpec& mask) {
  model.validate();
  std::vector<AttentionKernel<Scalar>> heads;
  heads.reserve(static_cast<std::size_t>(model.heads));
  for (Index h = 0; h < model.heads; ++h) heads.push_back(build_kernel(model, mask, h));
  return average_heads(heads);
}

/// Row i is `weights` restricted to the admissible keys of i, renormalized.
/// Under a causal mask every such kernel is stochastically monotone.
template <typename Scalar>
AttentionKernel<Scalar> generate_monotone_kernel(const MaskSpec& mask,
                                                 std::span<const Scalar> weights) {
  mask.validate();
  if (static_cast<Index>(weights.size()) != mask.n)
    throw Error(ErrorCode::DimensionMismatch, "generate_monotone_kernel: need one weight per position");
  for (Scalar w : weights)
    if (!(w > Scalar(0)) || !std::isfinite(static_cast<double>(w)))
      throw Error(ErrorCode::InvalidArgument, "generate_monotone_kernel: weights must be positive");
  Matrix<Scalar> m = Matrix<Scalar>::Zero(mask.n, mask.n);
  for (Index i = 0; i < mask.n; ++i) {
    const Index lo = mask.first_key(i);
    Scalar norm(0);
    for (Index j = lo; j <= i; ++j) norm += weights[static_cast<std::size_t>(j)];
    for (Index j = lo; j <= i; ++j) m(i, j) = weights[static_cast<std::size_t>(j)] / norm;
  }
  return AttentionKernel<Scalar>::from_matrix(std::move(m), mask, Scalar(tolerance::kRowSum));
}

template <typename Scalar>
AttentionKernel<Scalar> generate_monotone_kernel(const MaskSpec& mask,
                                                 const std::vector<Scalar>& weights) {
  return generate_monotone_kernel(mask, std::span<const Scalar>(weights));
}

/// Row i uniform over its admissible keys.
template <typename Scalar = double>
AttentionKernel<Scalar> uniform_kernel(const MaskSpec& mask) {
  return generate_monotone_kernel(mask, std::vector<Scalar>(static_cast<std::size_t>(mask.n), Scalar(1)));
}

/// Geometric ALiBi head slopes 2^(-8h/H), h = 1..H.
template <typename Scalar = double>
std::vector<Scalar> geometric_alibi_slopes(Index heads) {
  std::vector<Scalar> s;
  for (Index h = 1; h <= heads; ++h)
    s.push_back(std::exp2(Scalar(-8) * Scalar(h) / Scalar(heads)));
  return s;
}

}  // namespace rollout_lab

#endif  // ROLLOUT_LAB_KERNELS_HPP
