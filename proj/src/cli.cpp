#include "rollout_lab/cli.hpp"

#include "rollout_lab/asymptotics.hpp"
#include "rollout_lab/io.hpp"
#include "rollout_lab/kernels.hpp"
#include "rollout_lab/metrics.hpp"
#include "rollout_lab/rollout.hpp"
#include "rollout_lab/stochastic_order.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

namespace rollout_lab::cli {

namespace fs = std::filesystem;
using io::json;

namespace {

constexpr const char* kFooter = R"(Exit codes:
  0  success
  1  usage error (unknown subcommand, bad or missing flag)
  2  invalid argument
  3  dimension mismatch
  4  invariant violation
  5  numerical failure
  6  schema violation (malformed JSON, wrong schema tag or version)
  7  I/O failure
Failures print one JSON object {"error", "message", "exit_code"} on stderr.)";

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return kInvalidArgument;
    case ErrorCode::DimensionMismatch: return kDimensionMismatch;
    case ErrorCode::InvariantViolation: return kInvariantViolation;
    case ErrorCode::NumericalFailure: return kNumericalFailure;
    case ErrorCode::Schema: return kSchema;
    case ErrorCode::Io: return kIo;
  }
  return kInvalidArgument;
}

int report_error(std::ostream& err, const std::string& kind, const std::string& message, int code) {
  err << json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << "\n";
  return code;
}

[[noreturn]] void bad_arg(const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); }

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) bad_arg(what + ": trailing characters in \"" + s + "\"");
    return v;
  } catch (const std::logic_error&) {
    bad_arg(what + ": \"" + s + "\" is not a number");
  }
}

std::vector<std::string> split_spec(const std::string& spec) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream ss(spec);
  while (std::getline(ss, part, ':')) parts.push_back(part);
  return parts;
}

// One generator per (seed, stream, index); streams never share state.
std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index)};
  return std::mt19937_64(seq);
}

Kernel random_monotone_kernel(const MaskSpec& mask, std::uint64_t seed, Index layer) {
  auto rng = stream_rng(seed, 1, static_cast<std::uint64_t>(layer));
  std::uniform_real_distribution<double> w(0.5, 2.0);
  std::vector<double> weights(static_cast<std::size_t>(mask.n));
  for (auto& x : weights) x = w(rng);
  return generate_monotone_kernel(mask, weights);
}

MixingSchedule<double> parse_schedule(const std::string& spec, Index depth, bool depth_given) {
  const auto parts = split_spec(spec);
  if (parts.empty()) bad_arg("--schedule: empty spec");
  const std::string& kind = parts[0];
  if (kind == "file") {
    if (spec.size() <= 5) bad_arg("--schedule file: needs a path");
    auto s = io::schedule_file_from_json(io::read_json(spec.substr(5))).schedule;
    if (depth_given && s.depth() != depth) bad_arg("--depth differs from the schedule file depth");
    return s;
  }
  if (depth < 1) bad_arg("--depth must be positive");
  std::vector<double> l(static_cast<std::size_t>(depth));
  if (kind == "constant" && parts.size() == 2) {
    return MixingSchedule<double>::constant(depth, parse_double(parts[1], "--schedule constant"));
  } else if (kind == "linear" && parts.size() == 3) {
    return MixingSchedule<double>::linear(depth, parse_double(parts[1], "--schedule linear"),
                                          parse_double(parts[2], "--schedule linear"));
  } else if (kind == "geometric" && parts.size() == 2) {
    const double r = parse_double(parts[1], "--schedule geometric");
    double x = 1.0;
    for (auto& v : l) v = x *= r;
  } else if (kind == "harmonic" && parts.size() == 1) {
    for (std::size_t t = 0; t < l.size(); ++t) l[t] = 1.0 / static_cast<double>(t + 1);
  } else {
    bad_arg("--schedule: expected constant:X, linear:A:B, geometric:R, harmonic or file:PATH (got \"" + spec + "\")");
  }
  return MixingSchedule<double>(std::move(l));
}

void emit(std::ostream& out, const json& doc) { out << doc.dump(2) << "\n"; }

fs::path prepare_out(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw Error(ErrorCode::Io, "cannot create output directory " + dir);
  return p;
}

// --- run ---------------------------------------------------------------------

struct RunArgs {
  std::string config, variant, out;
  bool full_matrix = false;
};

int cmd_run(const RunArgs& a, std::ostream& out) {
  auto config = io::rollout_config_from_json(io::read_json(a.config));
  if (!a.variant.empty()) config.variant = io::variant_from_tag(a.variant);
  const fs::path dir = prepare_out(a.out);
  io::RolloutDocument doc{config.variant, run_rollout(config, RolloutOptions{a.full_matrix})};
  io::write_json(dir / "result.json", io::to_json(doc));
  io::write_text(dir / "trajectory.csv", io::trajectory_csv(doc.result));
  emit(out, {{"config_digest", doc.result.config_digest},
             {"variant", variant_tag(config.variant)},
             {"depth", doc.result.depth()},
             {"n", doc.result.size()},
             {"files", {(dir / "result.json").string(), (dir / "trajectory.csv").string()}}});
  return kOk;
}

// --- compare -------------------------------------------------------------------

Distribution load_profile(const fs::path& path) {
  const json doc = io::read_json(path);
  const std::string kind = io::schema_kind(doc);
  if (kind == "distribution") return io::distribution_from_json(doc);
  if (kind == "measured_profile") return io::measured_profile_from_json(doc).influence;
  if (kind == "rollout_result") {
    auto r = io::rollout_result_from_json(doc);
    if (r.result.trajectory.empty()) throw Error(ErrorCode::InvalidArgument, path.string() + ": empty trajectory");
    return r.result.last();
  }
  throw Error(ErrorCode::Schema, path.string() + ": expected a distribution, measured_profile or rollout_result");
}

struct CompareArgs {
  std::string pred, meas, batch, out;
};

int cmd_compare(const CompareArgs& a, std::ostream& out) {
  if (!a.batch.empty()) {
    const io::ComparisonBatch batch = io::comparison_batch_from_json(io::read_json(a.batch));
    const fs::path base = fs::path(a.batch).parent_path();
    auto resolve = [&](const std::string& p) {
      const fs::path f(p);
      return f.is_absolute() ? f : base / f;
    };
    std::vector<io::ComparisonRow> rows;
    for (const auto& r : batch.rows) {
      io::ComparisonRow row{r.label, {}, {}, {}};
      const Distribution meas = load_profile(resolve(r.meas));
      for (const auto& [variant, path] : r.pred) {
        const auto c = compare_profiles(load_profile(resolve(path)), meas);
        switch (variant) {
          case Variant::AttentionOnly: row.a = c; break;
          case Variant::ResidualAware: row.b = c; break;
          case Variant::ResidualAwareWithContent: row.c = c; break;
        }
      }
      rows.push_back(std::move(row));
    }
    const std::string csv = io::comparison_table_csv(rows);
    if (!a.out.empty()) io::write_text(prepare_out(a.out) / "comparison_table.csv", csv);
    out << csv;
    return kOk;
  }
  if (a.pred.empty() || a.meas.empty()) bad_arg("compare: needs --pred and --meas (or --batch)");
  const ComparisonResult c = compare_profiles(load_profile(a.pred), load_profile(a.meas));
  const json doc = io::to_json(c);
  if (!a.out.empty()) io::write_json(prepare_out(a.out) / "comparison.json", doc);
  emit(out, doc);
  return kOk;
}

// --- check-monotone ------------------------------------------------------------

struct MonotoneArgs {
  std::string kernel, out;
  double tol = tolerance::kMonotone;
};

int cmd_check_monotone(const MonotoneArgs& a, std::ostream& out) {
  const Kernel k = io::kernel_from_json(io::read_json(a.kernel));
  const json doc = io::to_json(check_stoch_monotone(k, a.tol));
  if (!a.out.empty()) io::write_json(prepare_out(a.out) / "monotonicity_report.json", doc);
  emit(out, doc);
  return kOk;
}

// --- dichotomy -----------------------------------------------------------------

struct DichotomyArgs {
  std::string schedule = "constant:1.0", kernel = "uniform", out;
  Index n = 8, depth = 200;
  bool depth_given = false;
  std::uint64_t seed = 0;
  double tol = tolerance::kCollapse;
};

int cmd_dichotomy(const DichotomyArgs& a, std::ostream& out) {
  const MixingSchedule<double> schedule = parse_schedule(a.schedule, a.depth, a.depth_given);
  const Index depth = schedule.depth();

  std::function<const MatrixXd&(Index)> kernel_at;
  MatrixXd fixed;
  MatrixXd scratch;
  MaskSpec mask;
  double epsilon = 0.0;

  const auto parts = split_spec(a.kernel);
  const std::string kind = parts.empty() ? std::string() : parts[0];
  if (kind == "random") {
    mask = MaskSpec::causal(a.n);
    epsilon = std::numeric_limits<double>::infinity();
    for (Index t = 0; t < depth; ++t) {
      const Kernel k = random_monotone_kernel(mask, a.seed, t);
      epsilon = std::min(epsilon, estimate_epsilon(std::vector<Kernel>{k}));
    }
    kernel_at = [&](Index t) -> const MatrixXd& {
      scratch = random_monotone_kernel(mask, a.seed, t).matrix();
      return scratch;
    };
  } else {
    std::optional<Kernel> k;
    if (kind == "uniform" && parts.size() == 1) {
      k = uniform_kernel(MaskSpec::causal(a.n));
    } else if (kind == "alibi" && parts.size() == 2) {
      LayerLogitModel<double> layer{BiasModel<double>::alibi({parse_double(parts[1], "--kernel alibi")}), {}, 1};
      k = build_kernel(layer, MaskSpec::causal(a.n), 0);
    } else if (kind == "file" && a.kernel.size() > 5) {
      k = io::kernel_from_json(io::read_json(a.kernel.substr(5)));
    } else {
      bad_arg("--kernel: expected uniform, alibi:M, random or file:PATH (got \"" + a.kernel + "\")");
    }
    mask = k->mask();
    epsilon = estimate_epsilon(std::vector<Kernel>{*k});
    fixed = k->matrix();
    kernel_at = [&](Index) -> const MatrixXd& { return fixed; };
  }

  const DichotomyRun run = dichotomy(kernel_at, mask, schedule, epsilon, a.tol);
  const json doc = io::to_json(run.report);
  if (!a.out.empty()) {
    const fs::path dir = prepare_out(a.out);
    io::write_json(dir / "dichotomy.json", doc);
    io::write_text(dir / "bounds.csv", io::bounds_csv(run.checkpoints));
  }
  json shown = doc;
  shown["P_n1"] = run.final(mask.n - 1, 0);
  shown["collapse_flag"] = run.final(mask.n - 1, 0) >= 1.0 - a.tol;
  emit(out, shown);
  return kOk;
}

// --- fit-content ---------------------------------------------------------------

struct FitArgs {
  std::string logits, out;
  Index bins = kDefaultBins;
};

int cmd_fit_content(const FitArgs& a, std::ostream& out) {
  const io::LogitMatrix m = io::logit_matrix_from_json(io::read_json(a.logits));
  const json doc = io::to_json(fit_content(m.logits, m.mask, a.bins));
  if (!a.out.empty()) io::write_json(prepare_out(a.out) / "content_fit.json", doc);
  emit(out, doc);
  return kOk;
}

// --- validate ------------------------------------------------------------------

int cmd_validate(const std::vector<std::string>& files, std::ostream& out) {
  json results = json::array();
  for (const auto& f : files) results.push_back({{"file", f}, {"kind", io::validate_file(f)}, {"valid", true}});
  emit(out, results);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Residual-aware attention rollout laboratory", "rollout_lab"};
  app.footer(kFooter);
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Execute a rollout config; writes result.json and trajectory.csv");
  run_cmd->add_option("--config", run_args.config, "Rollout config JSON")->required();
  run_cmd->add_option("--variant", run_args.variant, "Override the config variant")->check(CLI::IsMember({"a", "b", "c"}));
  run_cmd->add_option("--out", run_args.out, "Output directory")->required();
  run_cmd->add_flag("--full-matrix", run_args.full_matrix, "Also export the full rollout matrix P(T)");

  CompareArgs cmp_args;
  auto* cmp_cmd = app.add_subcommand("compare", "Spearman and normalized 1-Wasserstein between two profiles");
  cmp_cmd->add_option("--pred", cmp_args.pred, "Predicted profile (distribution, rollout_result or measured_profile)");
  cmp_cmd->add_option("--meas", cmp_args.meas, "Measured profile");
  cmp_cmd->add_option("--batch", cmp_args.batch, "comparison_batch manifest; emits the variant-by-metric CSV table");
  cmp_cmd->add_option("--out", cmp_args.out, "Output directory");

  MonotoneArgs mono_args;
  auto* mono_cmd = app.add_subcommand("check-monotone", "Prefix-mass monotonicity report for a kernel file");
  mono_cmd->add_option("--kernel", mono_args.kernel, "Kernel JSON")->required();
  mono_cmd->add_option("--tol", mono_args.tol, "Violation tolerance")->capture_default_str();
  mono_cmd->add_option("--out", mono_args.out, "Output directory");

  DichotomyArgs dich_args;
  auto* dich_cmd = app.add_subcommand("dichotomy", "Collapse / non-collapse bounds over a long schedule");
  dich_cmd->add_option("--schedule", dich_args.schedule,
                       "constant:X | linear:A:B | geometric:R | harmonic | file:PATH")
      ->capture_default_str();
  dich_cmd->add_option("--kernel", dich_args.kernel, "uniform | alibi:M | random | file:PATH")->capture_default_str();
  dich_cmd->add_option("--n", dich_args.n, "Sequence length")->capture_default_str()->check(CLI::PositiveNumber);
  auto* depth_opt = dich_cmd->add_option("--depth", dich_args.depth, "Depth T")->capture_default_str()->check(CLI::PositiveNumber);
  dich_cmd->add_option("--seed", dich_args.seed, "Seed for --kernel random")->capture_default_str();
  dich_cmd->add_option("--tol", dich_args.tol, "Collapse detection tolerance")->capture_default_str();
  dich_cmd->add_option("--out", dich_args.out, "Output directory");

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit-content", "Constant-plus-diagonal fit of a logit matrix");
  fit_cmd->add_option("--logits", fit_args.logits, "Logit matrix JSON")->required();
  fit_cmd->add_option("--bins", fit_args.bins, "Histogram bins for the similarity statistic")
      ->capture_default_str()
      ->check(CLI::Range(Index{2}, Index{1} << 20));
  fit_cmd->add_option("--out", fit_args.out, "Output directory");

  std::vector<std::string> files;
  auto* val_cmd = app.add_subcommand("validate", "Schema-check interchange files");
  val_cmd->add_option("files", files, "Files to check")->required();

  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    return report_error(err, "usage", e.what(), kUsage);
  }

  try {
    if (run_cmd->parsed()) return cmd_run(run_args, out);
    if (cmp_cmd->parsed()) return cmd_compare(cmp_args, out);
    if (mono_cmd->parsed()) return cmd_check_monotone(mono_args, out);
    if (dich_cmd->parsed()) {
      dich_args.depth_given = depth_opt->count() > 0;
      return cmd_dichotomy(dich_args, out);
    }
    if (fit_cmd->parsed()) return cmd_fit_content(fit_args, out);
    if (val_cmd->parsed()) return cmd_validate(files, out);
  } catch (const Error& e) {
    const int code = exit_code_for(e.code());
    return report_error(err, to_string(e.code()), e.what(), code);
  } catch (const io::json::exception& e) {
    return report_error(err, "schema", e.what(), kSchema);
  } catch (const std::filesystem::filesystem_error& e) {
    return report_error(err, "io", e.what(), kIo);
  }
  return report_error(err, "usage", "no subcommand", kUsage);
}

}  // namespace rollout_lab::cli
