// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include "rollout_lab/asymptotics.hpp"
#include "rollout_lab/cli.hpp"
#include "rollout_lab/io.hpp"
#include "rollout_lab/metrics.hpp"
#include "rollout_lab/rollout.hpp"
#include "rollout_lab/stochastic_order.hpp"
#include "test_support.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>

using namespace rollout_lab;
using namespace rollout_lab::testing;
using io::json;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> random_schedule(Rng& rng, Index depth) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> l(static_cast<std::size_t>(depth));
  for (auto& x : l) x = u(rng);
  return l;
}

// Largest amount by which `upper` prefix masses exceed `lower` over cutoffs 1..n-1.
double prefix_excess(const RowVectorXd& upper, const RowVectorXd& lower, Index cutoff) {
  const auto fu = cumulative(upper), fl = cumulative(lower);
  double worst = 0.0;
  for (Index k = 0; k < cutoff; ++k) worst = std::max(worst, fu[static_cast<std::size_t>(k)] - fl[static_cast<std::size_t>(k)]);
  return worst;
}

RolloutConfig<double> homogeneous(Index n, LayerLogitModel<double> layer, MixingSchedule<double> s, Variant v) {
  RolloutConfig<double> c;
  c.mask = MaskSpec::causal(n);
  c.layers.assign(static_cast<std::size_t>(s.depth()), layer);
  c.schedule = std::move(s);
  c.variant = v;
  return c;
}

Outcome primacy_drift() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(1001);
  const Index ns[] = {8, 32, 128}, ts[] = {4, 16, 64};
  double worst = 0.0;
  for (int cfg = 0; cfg < 100; ++cfg) {
    const Index n = ns[cfg % 3], depth = ts[(cfg / 3) % 3];
    const auto mask = cfg % 4 == 3 ? MaskSpec::sliding(n, 1 + n / 4) : MaskSpec::causal(n);
    std::vector<MatrixXd> kernels;
    for (Index t = 0; t < depth; ++t) kernels.push_back(random_monotone_kernel(rng, mask).matrix());
    const auto r = rollout_kernels(kernels, MixingSchedule<double>(random_schedule(rng, depth)));
    RowVectorXd prev = RowVectorXd::Unit(n, n - 1);
    for (const auto& d : r.trajectory) {
      worst = std::max(worst, prefix_excess(prev, d.probs(), n - 1));
      prev = d.probs();
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && secs < 30.0, fmt("100 configs, worst prefix-mass decrease %.3g, %.2f s", worst, secs)};
}

Outcome residual_recency() {
  Rng rng(1002);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int pair = 0; pair < 100; ++pair) {
    const Index n = 4 + pair % 29, depth = 1 + pair % 17;
    const auto mask = pair % 5 == 4 ? MaskSpec::sliding(n, 3) : MaskSpec::causal(n);
    std::vector<MatrixXd> kernels;
    std::vector<double> small, large;
    for (Index t = 0; t < depth; ++t) {
      kernels.push_back(random_monotone_kernel(rng, mask).matrix());
      const double a = u(rng), b = u(rng);
      small.push_back(std::min(a, b));
      large.push_back(std::max(a, b));
    }
    const auto ps = rollout_kernels(kernels, MixingSchedule<double>(small));
    const auto pl = rollout_kernels(kernels, MixingSchedule<double>(large));
    worst = std::max(worst, prefix_excess(ps.last().probs(), pl.last().probs(), n - 1));
  }
  return {worst <= 1e-12, fmt("100 schedule pairs, worst ordering breach %.3g", worst)};
}

Outcome positional_recency() {
  Rng rng(1003);
  double worst = 0.0;
  int runs = 0;
  for (double m : {0.25, 1.0, 4.0})
    for (int trial = 0; trial < 10; ++trial) {
      const Index n = 16 + 8 * trial, depth = 4 + trial;
      const auto mask = trial % 3 == 2 ? MaskSpec::sliding(n, 6) : MaskSpec::causal(n);
      const auto alibi = BiasModel<double>::alibi({m});
      std::vector<MatrixXd> base, biased;
      for (Index t = 0; t < depth; ++t) {
        // Content-free monotone base logits: log-weights that depend on the key only.
        const auto w = random_weights(rng, n);
        MatrixXd plain(n, n), tilted(n, n);
        for (Index i = 0; i < n; ++i)
          for (Index j = 0; j < n; ++j) {
            plain(i, j) = std::log(w[static_cast<std::size_t>(j)]);
            tilted(i, j) = plain(i, j) + (j <= i ? alibi.value(0, i, j) : 0.0);
          }
        base.push_back(build_kernel(LayerLogitModel<double>{BiasModel<double>::tabular({plain}), {}, 1}, mask, 0).matrix());
        biased.push_back(build_kernel(LayerLogitModel<double>{BiasModel<double>::tabular({tilted}), {}, 1}, mask, 0).matrix());
      }
      const MixingSchedule<double> s(random_schedule(rng, depth));
      const auto r0 = rollout_kernels(base, s), r1 = rollout_kernels(biased, s);
      for (Index t = 0; t < depth; ++t)
        worst = std::max(worst, prefix_excess(r1.trajectory[static_cast<std::size_t>(t)].probs(),
                                              r0.trajectory[static_cast<std::size_t>(t)].probs(), n - 1));
      ++runs;
    }
  return {worst <= 1e-12, fmt("%.0f runs over slopes {0.25, 1, 4}, worst breach %.3g", double(runs), worst)};
}

Outcome diagonal_content() {
  Rng rng(1004);
  std::uniform_real_distribution<double> slope(0.0, 2.0), uu(-3.0, 3.0);
  double worst = 0.0;
  int runs = 0;
  for (double delta : {2.0, 0.5, -2.0, -0.5})
    for (int trial = 0; trial < 10; ++trial) {
      const Index n = 8 + 4 * trial, depth = 3 + trial;
      const double m = trial == 0 ? 0.0 : slope(rng), u = uu(rng);
      const auto s = MixingSchedule<double>(random_schedule(rng, depth));
      const auto with = run_rollout(homogeneous(n, {BiasModel<double>::alibi({m}), {u, delta}, 1}, s,
                                                Variant::ResidualAwareWithContent),
                                    {true});
      const auto base = run_rollout(homogeneous(n, {BiasModel<double>::alibi({m}), {u, 0.0}, 1}, s,
                                                Variant::ResidualAwareWithContent),
                                    {true});
      for (Index i = 1; i < n; ++i) {
        const RowVectorXd a = with.final->row(i), b = base.final->row(i);
        worst = std::max(worst, delta > 0 ? prefix_excess(a, b, i) : prefix_excess(b, a, i));
      }
      ++runs;
    }
  return {worst <= 1e-12, fmt("%.0f runs over delta {+-2, +-0.5}, worst breach %.3g", double(runs), worst)};
}

Outcome summable_mixing() {
  const Index n = 8, horizon = 60;
  std::vector<double> l;
  for (Index t = 1; t <= horizon; ++t) l.push_back(std::ldexp(1.0, -static_cast<int>(t)));
  const MixingSchedule<double> s(l);
  const Kernel a = uniform_kernel(MaskSpec::causal(n));
  const double eps = estimate_epsilon(std::vector<Kernel>{a});
  std::vector<double> diag_min;
  const MatrixXd p = accumulate_rollout<double>(
      n, horizon, [&](Index) -> const MatrixXd& { return a.matrix(); }, [&](Index t) { return s[t]; },
      [&](Index, const MatrixXd& pt) { diag_min.push_back(pt.diagonal().minCoeff()); });
  const double bound = diag_lower_bound(s, eps);
  double below = 0.0;
  for (Index i = 0; i < n; ++i) below = std::max(below, bound - p(i, i));
  double settle = 0.0;
  for (std::size_t t = 40; t < diag_min.size(); ++t) settle = std::max(settle, std::abs(diag_min[t] - diag_min[t - 1]));
  return {below <= 1e-12 && settle < 1e-10,
          fmt("bound %.6f, min diag %.6f, largest change beyond T=40 %.3g", bound, p.diagonal().minCoeff(), settle)};
}

Outcome divergent_mixing() {
  const auto t0 = std::chrono::steady_clock::now();
  const Index n = 8;
  const auto s = MixingSchedule<double>::constant(200, 1.0);
  RolloutConfig<double> c = homogeneous(n, {BiasModel<double>::none(), {}, 1}, s, Variant::ResidualAware);
  const auto r = run_rollout(c, {true});
  const double eps = estimate_epsilon(std::vector<Kernel>{uniform_kernel(MaskSpec::causal(n))});
  bool envelope = true;
  for (Index j = 1; j < n; ++j) envelope = envelope && (*r.final)(j, j) <= std::exp(-double(j) * eps * s.total());
  const double pn1 = (*r.final)(n - 1, 0);
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d.precision(12);
  d << "P_n1 = " << pn1 << ", diagonal envelope " << (envelope ? "holds" : "broken") << ", " << fmt("%.3f s", secs);
  return {pn1 >= 0.999 && envelope && secs < 5.0, d.str()};
}

Outcome u_shape() {
  const Index n = 128, depth = 32;
  const auto c = homogeneous(n, {BiasModel<double>::alibi({1.0}), {}, 1}, MixingSchedule<double>::linear(depth, 0.5, 0.1),
                             Variant::ResidualAware);
  const auto p = run_rollout(c).last().probs();
  const double interior = p.segment(1, n - 2).minCoeff();
  Index where = 1;
  p.segment(1, n - 2).minCoeff(&where);
  const bool pass = p(0) > interior && p(n - 1) > interior;
  std::ostringstream d;
  d << "p(1) = " << p(0) << ", interior min = " << interior << " at position " << where + 2 << ", p(n) = " << p(n - 1);
  return {pass, d.str()};
}

Outcome metric_oracles() {
  const double rho = spearman(Eigen::Vector3d(1, 2, 3), Eigen::Vector3d(1, 3, 2));
  const double w1 = wasserstein(Distribution::point_mass(10, 0), Distribution::point_mass(10, 9));
  RowVectorXd a(3), b(3);
  a << 0.5, 0.5, 0.0;
  b << 0.0, 0.5, 0.5;
  const double w2 = wasserstein(Distribution(a), Distribution(b));
  const std::vector<double> occupancy{0.5, 0.5, 0.5, 1.5};
  const double sim = shannon_similarity(occupancy, 2);
  const bool pass = std::abs(rho - 0.5) <= 1e-12 && std::abs(w1 - 1.0) <= 1e-12 && std::abs(w2 - 0.5) <= 1e-12 &&
                    std::abs(sim - 0.1887) <= 1e-3;
  std::ostringstream d;
  d << "spearman " << rho << ", W(delta_1, delta_n) " << w1 << ", W(example) " << w2 << ", shannon " << sim;
  return {pass, d.str()};
}

Outcome content_recovery() {
  Rng rng(1005);
  std::uniform_real_distribution<double> uu(-10.0, 10.0), dd(-4.0, 4.0);
  std::uniform_int_distribution<Index> nn(2, 96), ww(2, 16);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = nn(rng);
    const auto mask = trial % 2 ? MaskSpec::causal(n) : MaskSpec::sliding(n, std::min(n, ww(rng)));
    const double u = uu(rng), delta = dd(rng);
    MatrixXd logits = MatrixXd::Zero(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = mask.first_key(i); j <= i; ++j) logits(i, j) = u + (i == j ? delta : 0.0);
    const auto fit = fit_content(logits, mask);
    worst = std::max({worst, std::abs(fit.u_hat - u), std::abs(fit.delta_hat - delta)});
  }
  return {worst < 1e-12, fmt("100 matrices, worst parameter error %.3g", worst)};
}

Outcome monotonicity_checker() {
  Rng rng(1006);
  long long violations = 0;
  for (int trial = 0; trial < 100; ++trial)
    violations += check_stoch_monotone(random_monotone_kernel(rng, MaskSpec::causal(2 + trial % 60))).violations;
  MatrixXd m(3, 3);
  m << 1, 0, 0, 0.2, 0.8, 0, 0.5, 0.3, 0.2;
  const auto r = check_stoch_monotone(Kernel::from_matrix(m, MaskSpec::causal(3)));
  const bool pass = violations == 0 && r.violations >= 1 && std::abs(r.max_gap - 0.3) <= 1e-12;
  std::ostringstream d;
  d << violations << " violations over 100 generated kernels; counterexample " << r.violations << " violation(s), gap "
    << r.max_gap;
  return {pass, d.str()};
}

Outcome interchange() {
  TempDir dir;
  std::vector<std::string> problems;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  };
  auto cli = [&](std::vector<std::string> args) {
    args.insert(args.begin(), "rollout_lab");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    if (code != 0) problems.push_back(args[1] + " exited " + std::to_string(code) + ": " + err.str());
  };

  // Field-exact round-trips.
  Rng rng(1007);
  const Kernel k = random_monotone_kernel(rng, MaskSpec::sliding(12, 5));
  io::write_json(dir / "kernel.json", io::to_json(k));
  const Kernel kb = io::kernel_from_json(io::read_json(dir / "kernel.json"));
  expect(kb.matrix() == k.matrix() && kb.mask() == k.mask(), "kernel");

  const Distribution d = random_distribution(rng, 12);
  io::write_json(dir / "dist.json", io::to_json(d));
  expect(io::distribution_from_json(io::read_json(dir / "dist.json")).probs() == d.probs(), "distribution");

  const io::MeasuredProfile mp{"toy-model", "toy-data", random_distribution(rng, 12), io::Provenance::GradientAttribution};
  io::write_json(dir / "meas.json", io::to_json(mp));
  const auto mpb = io::measured_profile_from_json(io::read_json(dir / "meas.json"));
  expect(mpb.model_id == mp.model_id && mpb.dataset_id == mp.dataset_id && mpb.influence.probs() == mp.influence.probs() &&
             mpb.provenance == mp.provenance,
         "measured_profile");

  const io::ScheduleFile sf{"toy-model", "toy-data", 12, MixingSchedule<double>(random_schedule(rng, 6))};
  io::write_json(dir / "schedule.json", io::to_json(sf));
  const auto sfb = io::schedule_file_from_json(io::read_json(dir / "schedule.json"));
  expect(sfb.model_id == sf.model_id && sfb.dataset_id == sf.dataset_id && sfb.sequence_length == sf.sequence_length &&
             sfb.schedule == sf.schedule,
         "schedule");

  io::LogitMatrix lm{MaskSpec::causal(12), MatrixXd::Random(12, 12)};
  io::write_json(dir / "logits.json", io::to_json(lm));
  const auto lmb = io::logit_matrix_from_json(io::read_json(dir / "logits.json"));
  bool logits_ok = lmb.mask == lm.mask;
  for (Index i = 0; i < 12; ++i)
    for (Index j = 0; j <= i; ++j) logits_ok = logits_ok && lmb.logits(i, j) == lm.logits(i, j);
  expect(logits_ok, "logits");

  RolloutConfig<double> cfg = homogeneous(12, {BiasModel<double>::alibi({0.3}), {0.5, 1.0 / 3.0}, 1},
                                          MixingSchedule<double>::linear(6, 0.5, 0.1), Variant::ResidualAwareWithContent);
  io::write_json(dir / "config.json", io::to_json(cfg));
  const auto cfgb = io::rollout_config_from_json(io::read_json(dir / "config.json"));
  expect(config_digest(cfgb) == config_digest(cfg) && cfgb.schedule == cfg.schedule, "rollout_config");

  const io::RolloutDocument doc{cfg.variant, run_rollout(cfg, {true})};
  io::write_json(dir / "result.json", io::to_json(doc));
  const auto docb = io::rollout_result_from_json(io::read_json(dir / "result.json"));
  bool traj_ok = docb.result.depth() == doc.result.depth() && *docb.result.final == *doc.result.final &&
                 docb.result.config_digest == doc.result.config_digest;
  for (std::size_t t = 0; traj_ok && t < doc.result.trajectory.size(); ++t)
    traj_ok = docb.result.trajectory[t].probs() == doc.result.trajectory[t].probs();
  expect(traj_ok, "rollout_result");

  // Every file the CLI emits passes validate.
  cli({"run", "--config", (dir / "config.json").string(), "--out", (dir / "out_run").string(), "--full-matrix"});
  cli({"compare", "--pred", (dir / "out_run" / "result.json").string(), "--meas", (dir / "meas.json").string(), "--out",
       (dir / "out_cmp").string()});
  io::ComparisonBatch batch;
  batch.rows.push_back({"toy", "meas.json", {{Variant::ResidualAwareWithContent, "out_run/result.json"}}});
  io::write_json(dir / "batch.json", io::to_json(batch));
  cli({"compare", "--batch", (dir / "batch.json").string(), "--out", (dir / "out_batch").string()});
  cli({"check-monotone", "--kernel", (dir / "kernel.json").string(), "--out", (dir / "out_mono").string()});
  cli({"dichotomy", "--schedule", "constant:1.0", "--kernel", "uniform", "--n", "8", "--depth", "200", "--out",
       (dir / "out_dich").string()});
  cli({"fit-content", "--logits", (dir / "logits.json").string(), "--out", (dir / "out_fit").string()});

  int validated = 0;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir.path())) {
    if (!entry.is_regular_file()) continue;
    std::ostringstream out, err;
    const int code = cli::run({"rollout_lab", "validate", entry.path().string()}, out, err);
    expect(code == 0, "validate " + entry.path().filename().string() + ": " + err.str());
    ++validated;
  }
  std::string detail = std::to_string(validated) + " files validated";
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty(), detail};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"primacy drift under monotone kernels", primacy_drift},
      {"stronger residual gives recency drift", residual_recency},
      {"ALiBi gives recency drift", positional_recency},
      {"diagonal content gives signed drift", diagonal_content},
      {"summable mixing keeps the diagonal", summable_mixing},
      {"divergent mixing collapses", divergent_mixing},
      {"U-shape at ALiBi slope 1", u_shape},
      {"metric oracles", metric_oracles},
      {"content fit recovery", content_recovery},
      {"monotonicity checker", monotonicity_checker},
      {"interchange round-trips and validation", interchange},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    failed += !o.pass;
  }
  std::printf("%d of %zu criteria passed\n", int(std::size(criteria)) - failed, std::size(criteria));
  return failed == 0 ? 0 : 1;
}
