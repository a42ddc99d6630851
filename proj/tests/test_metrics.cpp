#include "rollout_lab/metrics.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <array>

using namespace rollout_lab;
using namespace rollout_lab::testing;

namespace {

Distribution dist(std::initializer_list<double> v) {
  RowVectorXd p(static_cast<Index>(v.size()));
  Index j = 0;
  for (double x : v) p(j++) = x;
  return Distribution(p);
}

// Textbook formula for distinct values.
double spearman_no_ties(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = a.size();
  auto rank = [&](const std::vector<double>& v, std::size_t i) {
    double r = 1.0;
    for (double x : v) r += x < v[i];
    return r;
  };
  double d2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) d2 += std::pow(rank(a, i) - rank(b, i), 2);
  const double nn = double(n);
  return 1.0 - 6.0 * d2 / (nn * (nn * nn - 1.0));
}

// North-west corner transport plan on the line; optimal for a convex ground cost.
double transport_oracle(const Distribution& p, const Distribution& q) {
  const Index n = p.size();
  std::vector<double> a(p.probs().data(), p.probs().data() + n), b(q.probs().data(), q.probs().data() + n);
  double cost = 0.0;
  Index i = 0, j = 0;
  while (i < n && j < n) {
    const double m = std::min(a[i], b[j]);
    cost += m * double(std::abs(i - j)) / double(n - 1);
    a[i] -= m;
    b[j] -= m;
    if (a[i] <= 1e-300) ++i;
    else ++j;
  }
  return cost;
}

std::vector<double> entropy_values(const std::vector<Index>& counts) {
  std::vector<double> v;
  for (std::size_t b = 0; b < counts.size(); ++b)
    for (Index c = 0; c < counts[b]; ++c) v.push_back(double(b) + 0.5);
  return v;
}

}  // namespace

TEST_CASE("spearman examples") {
  const Eigen::VectorXd a = Eigen::Vector3d(1, 2, 3);
  CHECK(spearman(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(spearman(a, Eigen::Vector3d(3, 2, 1)) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(std::abs(spearman(a, Eigen::Vector3d(1, 3, 2)) - 0.5) <= 1e-12);
  CHECK_THROWS_AS(spearman(a, Eigen::Vector3d(1, 1, 1)), Error);
  CHECK_THROWS_AS(spearman(a, Eigen::Vector2d(1, 2)), Error);
  CHECK_THROWS_AS(spearman(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1)), Error);
}

TEST_CASE("spearman ties take average ranks") {
  const Eigen::Vector4d v(5, 1, 5, 2);
  const auto r = average_ranks(v);
  CHECK(r(0) == 3.5);
  CHECK(r(1) == 1.0);
  CHECK(r(2) == 3.5);
  CHECK(r(3) == 2.0);
}

TEST_CASE("spearman agrees with the no-ties formula and is rank invariant") {
  Rng rng(81);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 2 + trial % 40;
    std::vector<double> a(n), b(n);
    for (auto& x : a) x = z(rng);
    for (auto& x : b) x = z(rng);
    const Eigen::Map<Eigen::VectorXd> va(a.data(), n), vb(b.data(), n);
    const double rho = spearman(va, vb);
    CHECK(rho == doctest::Approx(spearman_no_ties(a, b)).epsilon(1e-12));
    const Eigen::VectorXd ta = va.array().exp(), tb = vb.array() * 3.0 + 7.0;
    CHECK(spearman(ta, tb) == doctest::Approx(rho).epsilon(1e-12));
  }
}

TEST_CASE("wasserstein examples") {
  const auto d = dist({0.2, 0.3, 0.5});
  CHECK(wasserstein(d, d) == 0.0);
  for (Index n : {2, 5, 64})
    CHECK(std::abs(wasserstein(Distribution::point_mass(n, 0), Distribution::point_mass(n, n - 1)) - 1.0) <= 1e-12);
  CHECK(std::abs(wasserstein(dist({0.5, 0.5, 0.0}), dist({0.0, 0.5, 0.5})) - 0.5) <= 1e-12);
  CHECK_THROWS_AS(wasserstein(d, Distribution::uniform(4)), Error);

  const auto cmp = compare_profiles(d, d);
  CHECK(cmp.spearman == doctest::Approx(1.0));
  CHECK(cmp.wasserstein == 0.0);
  CHECK(cmp.n == 3);
}

TEST_CASE("wasserstein between point masses is the normalized distance") {
  for (Index n : {2, 7, 33})
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        CHECK(wasserstein(Distribution::point_mass(n, i), Distribution::point_mass(n, j)) ==
              double(std::abs(i - j)) / double(n - 1));
}

TEST_CASE("wasserstein is a metric and matches the transport oracle") {
  Rng rng(83);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 2 + trial % 30;
    const auto p = random_distribution(rng, n), q = random_distribution(rng, n), r = random_distribution(rng, n);
    const double pq = wasserstein(p, q);
    CHECK(pq == doctest::Approx(transport_oracle(p, q)).epsilon(1e-10));
    CHECK(std::abs(pq - wasserstein(q, p)) <= 1e-15);
    CHECK(wasserstein(p, p) <= 1e-12);
    CHECK(pq <= wasserstein(p, r) + wasserstein(r, q) + 1e-12);
    CHECK(pq >= 0.0);
    CHECK(pq <= 1.0);
  }
}

TEST_CASE("shannon similarity examples") {
  const std::vector<double> same(17, 3.25);
  CHECK(shannon_similarity(same) == 1.0);

  const auto flat = entropy_values({4, 4, 4, 4});
  CHECK(shannon_similarity(flat, 4) == doctest::Approx(0.0).epsilon(1e-12));

  const auto skew = entropy_values({3, 1});
  const double h = -0.75 * std::log(0.75) - 0.25 * std::log(0.25);
  CHECK(shannon_similarity(skew, 2) == doctest::Approx(1.0 - h / std::log(2.0)).epsilon(1e-12));
  CHECK(std::abs(shannon_similarity(skew, 2) - 0.1887) <= 1e-3);

  CHECK_THROWS_AS(shannon_similarity(skew, 1), Error);
  CHECK_THROWS_AS(shannon_similarity(std::vector<double>{}, 2), Error);
}

TEST_CASE("shannon similarity puts the maximum in the last bin") {
  const std::array<double, 3> v{0.0, 0.0, 1.0};
  const double h = -(2.0 / 3) * std::log(2.0 / 3) - (1.0 / 3) * std::log(1.0 / 3);
  CHECK(shannon_similarity(v, 8) == doctest::Approx(1.0 - h / std::log(8.0)).epsilon(1e-12));
}

TEST_CASE("fit_content examples") {
  const auto mask = MaskSpec::causal(6);
  MatrixXd logits = MatrixXd::Zero(6, 6);
  for (Index i = 0; i < 6; ++i)
    for (Index j = 0; j <= i; ++j) logits(i, j) = 2.0 + (i == j ? 3.0 : 0.0);
  const auto fit = fit_content(logits, mask);
  CHECK(fit.u_hat == 2.0);
  CHECK(fit.delta_hat == 3.0);
  CHECK(fit.within_diag_similarity == 1.0);
  CHECK(fit.within_offdiag_similarity == 1.0);
  CHECK(fit.bins == kDefaultBins);

  const auto zero = fit_content(MatrixXd::Zero(6, 6), mask);
  CHECK(zero.u_hat == 0.0);
  CHECK(zero.delta_hat == 0.0);

  CHECK_THROWS_AS(fit_content(MatrixXd::Zero(1, 1), MaskSpec::causal(1)), Error);
  CHECK_THROWS_AS(fit_content(MatrixXd::Zero(4, 4), MaskSpec::sliding(4, 1)), Error);
  CHECK_THROWS_AS(fit_content(MatrixXd::Zero(4, 4), mask), Error);
}

TEST_CASE("fit_content on noisy off-diagonal logits") {
  Rng rng(87);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Index n = 40;
  MatrixXd logits(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) logits(i, j) = i == j ? 2.0 : u(rng);
  const auto fit = fit_content(logits, MaskSpec::causal(n), 20);
  CHECK(fit.within_offdiag_similarity > 0.0);
  CHECK(fit.within_offdiag_similarity < 1.0);
  CHECK(fit.within_diag_similarity == 1.0);
  CHECK(fit.u_hat == doctest::Approx(0.5).epsilon(0.05));
  CHECK(fit.bins == 20);
}

TEST_CASE("fit_content recovers randomized constant-plus-diagonal models") {
  Rng rng(89);
  std::uniform_real_distribution<double> uu(-20.0, 20.0), dd(-5.0, 5.0);
  std::uniform_int_distribution<Index> nn(2, 64), ww(2, 10);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = nn(rng);
    const auto mask = trial % 2 ? MaskSpec::causal(n) : MaskSpec::sliding(n, std::min(n, ww(rng)));
    const double u = uu(rng), delta = dd(rng);
    MatrixXd logits = MatrixXd::Constant(n, n, std::nan(""));
    for (Index i = 0; i < n; ++i)
      for (Index j = mask.first_key(i); j <= i; ++j) logits(i, j) = u + (i == j ? delta : 0.0);
    const auto fit = fit_content(logits, mask);
    CHECK(std::abs(fit.u_hat - u) < 1e-12);
    CHECK(std::abs(fit.delta_hat - delta) < 1e-12);
  }
}
