#include "rollout_lab/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace rollout_lab::io {

namespace {

[[noreturn]] void schema_error(const std::string& what) { throw Error(ErrorCode::Schema, what); }

const json& field(const json& j, const char* key) {
  if (!j.is_object()) schema_error("expected a JSON object");
  auto it = j.find(key);
  if (it == j.end()) schema_error(std::string("missing field \"") + key + "\"");
  return *it;
}

double number(const json& j, const char* what) {
  if (!j.is_number()) schema_error(std::string(what) + ": expected a number");
  return j.get<double>();
}

Index integer(const json& j, const char* what) {
  if (!j.is_number_integer() && !j.is_number_unsigned()) schema_error(std::string(what) + ": expected an integer");
  return j.get<Index>();
}

std::string text(const json& j, const char* what) {
  if (!j.is_string()) schema_error(std::string(what) + ": expected a string");
  return j.get<std::string>();
}

std::vector<double> numbers(const json& j, const char* what) {
  if (!j.is_array()) schema_error(std::string(what) + ": expected an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& x : j) out.push_back(number(x, what));
  return out;
}

RowVectorXd row_vector(const json& j, const char* what) {
  const auto v = numbers(j, what);
  return Eigen::Map<const RowVectorXd>(v.data(), static_cast<Index>(v.size()));
}

json rows_of(const MatrixXd& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

// Null cells become `null_value`.
MatrixXd matrix_from_rows(const json& j, Index n, const char* what, std::optional<double> null_value = {}) {
  if (!j.is_array() || static_cast<Index>(j.size()) != n)
    schema_error(std::string(what) + ": expected " + std::to_string(n) + " rows");
  MatrixXd m(n, n);
  for (Index i = 0; i < n; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != n)
      schema_error(std::string(what) + ": row " + std::to_string(i + 1) + " must have " + std::to_string(n) + " entries");
    for (Index c = 0; c < n; ++c) {
      const auto& x = row[static_cast<std::size_t>(c)];
      if (x.is_null() && null_value)
        m(i, c) = *null_value;
      else
        m(i, c) = number(x, what);
    }
  }
  return m;
}

json vector_of(const RowVectorXd& v) {
  json a = json::array();
  for (Index j = 0; j < v.size(); ++j) a.push_back(v(j));
  return a;
}

json layer_to_json(const LayerLogitModel<double>& l) {
  json bias;
  switch (l.bias.kind) {
    case BiasKind::None: bias = {{"kind", "none"}}; break;
    case BiasKind::ALiBi: bias = {{"kind", "alibi"}, {"slopes", l.bias.slopes}}; break;
    case BiasKind::Tabular: {
      json tables = json::array();
      for (const auto& t : l.bias.tables) tables.push_back(rows_of(t));
      bias = {{"kind", "tabular"}, {"tables", tables}};
      break;
    }
  }
  return {{"heads", l.heads}, {"bias", bias}, {"content", {{"u", l.content.u}, {"delta", l.content.delta}}}};
}

LayerLogitModel<double> layer_from_json(const json& j, Index n) {
  LayerLogitModel<double> l;
  const json& bias = field(j, "bias");
  const std::string kind = text(field(bias, "kind"), "bias.kind");
  if (kind == "none") {
    l.bias = BiasModel<double>::none();
  } else if (kind == "alibi") {
    l.bias = BiasModel<double>::alibi(numbers(field(bias, "slopes"), "bias.slopes"));
  } else if (kind == "tabular") {
    const json& tables = field(bias, "tables");
    if (!tables.is_array()) schema_error("bias.tables: expected an array");
    std::vector<MatrixXd> ts;
    for (const auto& t : tables) ts.push_back(matrix_from_rows(t, n, "bias.tables", 0.0));
    l.bias = BiasModel<double>::tabular(std::move(ts));
  } else {
    schema_error("bias.kind: unknown kind \"" + kind + "\"");
  }
  if (j.contains("heads"))
    l.heads = integer(j["heads"], "heads");
  else if (l.bias.kind == BiasKind::ALiBi)
    l.heads = static_cast<Index>(l.bias.slopes.size());
  else if (l.bias.kind == BiasKind::Tabular)
    l.heads = static_cast<Index>(l.bias.tables.size());
  if (j.contains("content")) {
    const json& c = j["content"];
    l.content.u = c.contains("u") ? number(c["u"], "content.u") : 0.0;
    l.content.delta = c.contains("delta") ? number(c["delta"], "content.delta") : 0.0;
  }
  l.validate();
  return l;
}

const char* verdict_name(Verdict v) { return rollout_lab::to_string(v); }

Verdict verdict_from(const std::string& s) {
  if (s == "non_collapse") return Verdict::NonCollapse;
  if (s == "collapse") return Verdict::Collapse;
  if (s == "undetermined") return Verdict::Undetermined;
  schema_error("verdict: unknown value \"" + s + "\"");
}

void check_unit_interval(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::InvariantViolation, std::string(what) + " must lie in [0, 1]");
}

}  // namespace

std::string schema_tag(const std::string& kind) { return kind + "/" + std::to_string(kSchemaVersion); }

std::string schema_kind(const json& doc) {
  const std::string tag = text(field(doc, "schema"), "schema");
  const auto slash = tag.find('/');
  if (slash == std::string::npos) schema_error("schema tag \"" + tag + "\" lacks a version");
  if (tag.substr(slash + 1) != std::to_string(kSchemaVersion))
    schema_error("schema version mismatch: \"" + tag + "\", this build reads version " + std::to_string(kSchemaVersion));
  return tag.substr(0, slash);
}

void require_schema(const json& doc, const std::string& kind) {
  const std::string got = schema_kind(doc);
  if (got != kind) schema_error("expected schema \"" + schema_tag(kind) + "\", found \"" + schema_tag(got) + "\"");
}

json to_json(const MaskSpec& mask) {
  if (mask.kind == MaskKind::Causal) return {{"kind", "causal"}};
  return {{"kind", "sliding"}, {"window", mask.window}};
}

MaskSpec mask_from_json(const json& j, Index n) {
  const std::string kind = text(field(j, "kind"), "mask.kind");
  if (kind == "causal") return MaskSpec::causal(n);
  if (kind == "sliding") return MaskSpec::sliding(n, integer(field(j, "window"), "mask.window"));
  schema_error("mask.kind: unknown kind \"" + kind + "\"");
}

json to_json(const Kernel& kernel) {
  return {{"schema", schema_tag("kernel")},
          {"n", kernel.size()},
          {"mask", to_json(kernel.mask())},
          {"rows", rows_of(kernel.matrix())}};
}

Kernel kernel_from_json(const json& j) {
  require_schema(j, "kernel");
  const Index n = integer(field(j, "n"), "n");
  const MaskSpec mask = mask_from_json(field(j, "mask"), n);
  return Kernel::from_matrix(matrix_from_rows(field(j, "rows"), n, "rows"), mask, tolerance::kImport);
}

json to_json(const Distribution& d) {
  return {{"schema", schema_tag("distribution")}, {"n", d.size()}, {"probs", vector_of(d.probs())}};
}

Distribution distribution_from_json(const json& j) {
  require_schema(j, "distribution");
  const Index n = integer(field(j, "n"), "n");
  RowVectorXd p = row_vector(field(j, "probs"), "probs");
  if (p.size() != n) schema_error("probs: length differs from n");
  return Distribution(std::move(p));
}

json to_json(const MonotonicityReport& r) {
  return {{"schema", schema_tag("monotonicity_report")},
          {"total_triples", r.total_triples},
          {"violations", r.violations},
          {"violation_fraction", r.violation_fraction},
          {"mean_conditional_gap", r.mean_conditional_gap},
          {"max_gap", r.max_gap}};
}

MonotonicityReport monotonicity_report_from_json(const json& j) {
  require_schema(j, "monotonicity_report");
  MonotonicityReport r;
  r.total_triples = integer(field(j, "total_triples"), "total_triples");
  r.violations = integer(field(j, "violations"), "violations");
  r.violation_fraction = number(field(j, "violation_fraction"), "violation_fraction");
  r.mean_conditional_gap = number(field(j, "mean_conditional_gap"), "mean_conditional_gap");
  r.max_gap = number(field(j, "max_gap"), "max_gap");
  if (r.violations < 0 || r.violations > r.total_triples)
    throw Error(ErrorCode::InvariantViolation, "monotonicity_report: violations outside 0..total_triples");
  if (r.mean_conditional_gap < 0.0 || r.max_gap < 0.0)
    throw Error(ErrorCode::InvariantViolation, "monotonicity_report: gaps must be nonnegative");
  const double expected = r.total_triples > 0 ? double(r.violations) / double(r.total_triples) : 0.0;
  if (std::abs(expected - r.violation_fraction) > 1e-15)
    throw Error(ErrorCode::InvariantViolation, "monotonicity_report: violation_fraction != violations / total_triples");
  return r;
}

Variant variant_from_tag(const std::string& tag) {
  if (tag == "a") return Variant::AttentionOnly;
  if (tag == "b") return Variant::ResidualAware;
  if (tag == "c") return Variant::ResidualAwareWithContent;
  throw Error(ErrorCode::InvalidArgument, "variant must be one of a, b, c (got \"" + tag + "\")");
}

json to_json(const RolloutConfig<double>& config) {
  json layers = json::array();
  for (const auto& l : config.layers) layers.push_back(layer_to_json(l));
  return {{"schema", schema_tag("rollout_config")},
          {"n", config.mask.n},
          {"mask", to_json(config.mask)},
          {"depth", config.depth()},
          {"layers", layers},
          {"schedule", config.schedule.lambdas()},
          {"variant", variant_tag(config.variant)}};
}

RolloutConfig<double> rollout_config_from_json(const json& j) {
  require_schema(j, "rollout_config");
  RolloutConfig<double> c;
  const Index n = integer(field(j, "n"), "n");
  c.mask = mask_from_json(field(j, "mask"), n);
  const Index depth = integer(field(j, "depth"), "depth");
  if (depth < 1) throw Error(ErrorCode::InvalidArgument, "config: depth must be positive");

  if (j.contains("layers")) {
    for (const auto& l : j["layers"]) c.layers.push_back(layer_from_json(l, n));
    if (c.depth() != depth) schema_error("config: layers length differs from depth");
  } else if (j.contains("layer_template")) {
    c.layers.assign(static_cast<std::size_t>(depth), layer_from_json(j["layer_template"], n));
  } else {
    schema_error("config: needs \"layers\" or \"layer_template\"");
  }

  const json& s = field(j, "schedule");
  if (s.is_array()) {
    c.schedule = MixingSchedule<double>(numbers(s, "schedule"));
  } else if (s.is_object() && s.contains("constant")) {
    c.schedule = MixingSchedule<double>::constant(depth, number(s["constant"], "schedule.constant"));
  } else if (s.is_object() && s.contains("linear")) {
    const auto ends = numbers(s["linear"], "schedule.linear");
    if (ends.size() != 2) schema_error("schedule.linear: expected [first, last]");
    c.schedule = MixingSchedule<double>::linear(depth, ends[0], ends[1]);
  } else {
    schema_error("schedule: expected an array, {\"constant\": x} or {\"linear\": [a, b]}");
  }
  c.variant = j.contains("variant") ? variant_from_tag(text(j["variant"], "variant")) : Variant::ResidualAware;
  c.validate();
  return c;
}

json to_json(const RolloutDocument& doc) {
  const auto& r = doc.result;
  json traj = json::array();
  for (const auto& d : r.trajectory) traj.push_back(vector_of(d.probs()));
  json out = {{"schema", schema_tag("rollout_result")},
              {"n", r.size()},
              {"depth", r.depth()},
              {"variant", variant_tag(doc.variant)},
              {"config_digest", r.config_digest},
              {"trajectory", traj}};
  if (r.final) out["final"] = rows_of(*r.final);
  return out;
}

RolloutDocument rollout_result_from_json(const json& j) {
  require_schema(j, "rollout_result");
  RolloutDocument doc;
  const Index n = integer(field(j, "n"), "n");
  const Index depth = integer(field(j, "depth"), "depth");
  doc.variant = variant_from_tag(text(field(j, "variant"), "variant"));
  doc.result.config_digest = text(field(j, "config_digest"), "config_digest");
  const json& traj = field(j, "trajectory");
  if (!traj.is_array() || static_cast<Index>(traj.size()) != depth) schema_error("trajectory: expected depth rows");
  for (const auto& row : traj) {
    RowVectorXd p = row_vector(row, "trajectory");
    if (p.size() != n) schema_error("trajectory: row length differs from n");
    doc.result.trajectory.emplace_back(std::move(p));
  }
  if (j.contains("final")) {
    MatrixXd f = matrix_from_rows(j["final"], n, "final");
    for (Index i = 0; i < n; ++i)
      if (std::abs(f.row(i).sum() - 1.0) > tolerance::kDistributionSum || (f.row(i).array() < 0.0).any())
        throw Error(ErrorCode::InvariantViolation, "final: row " + std::to_string(i + 1) + " is not stochastic");
    if (depth > 0 && (f.row(n - 1) - doc.result.trajectory.back().probs()).cwiseAbs().maxCoeff() > tolerance::kRowSum)
      throw Error(ErrorCode::InvariantViolation, "final: last row disagrees with the trajectory");
    doc.result.final = std::move(f);
  }
  return doc;
}

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::GradientAttribution: return "gradient_attribution";
    case Provenance::Synthetic: return "synthetic";
    case Provenance::Other: return "other";
  }
  return "other";
}

json to_json(const MeasuredProfile& p) {
  return {{"schema", schema_tag("measured_profile")},
          {"model_id", p.model_id},
          {"dataset_id", p.dataset_id},
          {"n", p.n()},
          {"influence", vector_of(p.influence.probs())},
          {"provenance", to_string(p.provenance)}};
}

MeasuredProfile measured_profile_from_json(const json& j) {
  require_schema(j, "measured_profile");
  MeasuredProfile p;
  p.model_id = text(field(j, "model_id"), "model_id");
  p.dataset_id = text(field(j, "dataset_id"), "dataset_id");
  const Index n = integer(field(j, "n"), "n");
  RowVectorXd v = row_vector(field(j, "influence"), "influence");
  if (v.size() != n) schema_error("influence: length differs from n");
  try {
    p.influence = Distribution(std::move(v));
  } catch (const Error& e) {
    throw Error(ErrorCode::InvariantViolation, std::string("measured_profile.influence: ") + e.what());
  }
  const std::string prov = text(field(j, "provenance"), "provenance");
  if (prov == "gradient_attribution")
    p.provenance = Provenance::GradientAttribution;
  else if (prov == "synthetic")
    p.provenance = Provenance::Synthetic;
  else if (prov == "other")
    p.provenance = Provenance::Other;
  else
    schema_error("provenance: unknown value \"" + prov + "\"");
  return p;
}

json to_json(const ScheduleFile& s) {
  return {{"schema", schema_tag("schedule")},
          {"model_id", s.model_id},
          {"dataset_id", s.dataset_id},
          {"depth", s.depth()},
          {"sequence_length", s.sequence_length},
          {"lambdas", s.schedule.lambdas()}};
}

ScheduleFile schedule_file_from_json(const json& j) {
  require_schema(j, "schedule");
  ScheduleFile s;
  s.model_id = text(field(j, "model_id"), "model_id");
  s.dataset_id = text(field(j, "dataset_id"), "dataset_id");
  s.sequence_length = integer(field(j, "sequence_length"), "sequence_length");
  if (s.sequence_length < 1) throw Error(ErrorCode::InvariantViolation, "schedule: sequence_length must be positive");
  const Index depth = integer(field(j, "depth"), "depth");
  auto lambdas = numbers(field(j, "lambdas"), "lambdas");
  if (static_cast<Index>(lambdas.size()) != depth) schema_error("lambdas: length differs from depth");
  s.schedule = MixingSchedule<double>(std::move(lambdas));
  return s;
}

json to_json(const LogitMatrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.mask.n; ++i) {
    json r = json::array();
    for (Index c = 0; c < m.mask.n; ++c) {
      if (m.mask.admits(i, c))
        r.push_back(m.logits(i, c));
      else
        r.push_back(nullptr);
    }
    rows.push_back(std::move(r));
  }
  return {{"schema", schema_tag("logits")}, {"n", m.mask.n}, {"mask", to_json(m.mask)}, {"rows", rows}};
}

LogitMatrix logit_matrix_from_json(const json& j) {
  require_schema(j, "logits");
  const Index n = integer(field(j, "n"), "n");
  LogitMatrix m{mask_from_json(field(j, "mask"), n), {}};
  m.logits = matrix_from_rows(field(j, "rows"), n, "rows", std::numeric_limits<double>::quiet_NaN());
  for (Index i = 0; i < n; ++i)
    for (Index c = 0; c < n; ++c) {
      if (!m.mask.admits(i, c))
        m.logits(i, c) = std::numeric_limits<double>::quiet_NaN();
      else if (!std::isfinite(m.logits(i, c)))
        throw Error(ErrorCode::InvariantViolation, "logits: admissible entry is not finite");
    }
  return m;
}

json to_json(const ComparisonResult& c) {
  return {{"schema", schema_tag("comparison")}, {"n", c.n}, {"spearman", c.spearman}, {"wasserstein", c.wasserstein}};
}

ComparisonResult comparison_from_json(const json& j) {
  require_schema(j, "comparison");
  ComparisonResult c;
  c.n = integer(field(j, "n"), "n");
  c.spearman = number(field(j, "spearman"), "spearman");
  c.wasserstein = number(field(j, "wasserstein"), "wasserstein");
  if (!(c.spearman >= -1.0 && c.spearman <= 1.0)) throw Error(ErrorCode::InvariantViolation, "spearman must lie in [-1, 1]");
  check_unit_interval(c.wasserstein, "wasserstein");
  return c;
}

json to_json(const ContentFit& f) {
  return {{"schema", schema_tag("content_fit")},
          {"u_hat", f.u_hat},
          {"delta_hat", f.delta_hat},
          {"within_diag_similarity", f.within_diag_similarity},
          {"within_offdiag_similarity", f.within_offdiag_similarity},
          {"bins", f.bins}};
}

ContentFit content_fit_from_json(const json& j) {
  require_schema(j, "content_fit");
  ContentFit f;
  f.u_hat = number(field(j, "u_hat"), "u_hat");
  f.delta_hat = number(field(j, "delta_hat"), "delta_hat");
  f.within_diag_similarity = number(field(j, "within_diag_similarity"), "within_diag_similarity");
  f.within_offdiag_similarity = number(field(j, "within_offdiag_similarity"), "within_offdiag_similarity");
  f.bins = integer(field(j, "bins"), "bins");
  check_unit_interval(f.within_diag_similarity, "within_diag_similarity");
  check_unit_interval(f.within_offdiag_similarity, "within_offdiag_similarity");
  if (f.bins < 2) throw Error(ErrorCode::InvariantViolation, "bins must be at least 2");
  return f;
}

json to_json(const DichotomyReport& r) {
  return {{"schema", schema_tag("dichotomy_report")},
          {"epsilon", r.epsilon},
          {"cumulative_mixing", r.cumulative_mixing},
          {"diag_lower_bound", r.diag_lower_bound},
          {"offdiag_upper_bound", {{"c_prime", r.offdiag_upper_bound.c_prime}, {"exponents", r.offdiag_upper_bound.exponents}}},
          {"verdict", verdict_name(r.verdict)}};
}

DichotomyReport dichotomy_report_from_json(const json& j) {
  require_schema(j, "dichotomy_report");
  DichotomyReport r;
  r.epsilon = number(field(j, "epsilon"), "epsilon");
  r.cumulative_mixing = number(field(j, "cumulative_mixing"), "cumulative_mixing");
  r.diag_lower_bound = numbers(field(j, "diag_lower_bound"), "diag_lower_bound");
  const json& env = field(j, "offdiag_upper_bound");
  r.offdiag_upper_bound.c_prime = number(field(env, "c_prime"), "c_prime");
  r.offdiag_upper_bound.exponents = numbers(field(env, "exponents"), "exponents");
  r.verdict = verdict_from(text(field(j, "verdict"), "verdict"));
  if (!(r.epsilon > 0.0 && r.epsilon <= 1.0)) throw Error(ErrorCode::InvariantViolation, "epsilon must lie in (0, 1]");
  for (double b : r.diag_lower_bound) check_unit_interval(b, "diag_lower_bound");
  return r;
}

json to_json(const ComparisonBatch& b) {
  json rows = json::array();
  for (const auto& r : b.rows) {
    json pred = json::object();
    for (const auto& [v, path] : r.pred) pred[variant_tag(v)] = path;
    rows.push_back({{"label", r.label}, {"meas", r.meas}, {"pred", pred}});
  }
  return {{"schema", schema_tag("comparison_batch")}, {"rows", rows}};
}

ComparisonBatch comparison_batch_from_json(const json& j) {
  require_schema(j, "comparison_batch");
  const json& rows = field(j, "rows");
  if (!rows.is_array()) schema_error("rows: expected an array");
  ComparisonBatch b;
  for (const auto& r : rows) {
    ComparisonBatch::Row row{text(field(r, "label"), "label"), text(field(r, "meas"), "meas"), {}};
    if (row.label.find_first_of(",\"\n") != std::string::npos)
      throw Error(ErrorCode::InvalidArgument, "label may not contain commas, quotes or newlines");
    const json& pred = field(r, "pred");
    if (!pred.is_object() || pred.empty()) schema_error("pred: expected an object keyed by variant a, b or c");
    for (const auto& [tag, path] : pred.items()) row.pred.emplace_back(variant_from_tag(tag), text(path, "pred"));
    b.rows.push_back(std::move(row));
  }
  return b;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Schema, path.string() + ": malformed JSON: " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& body) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << body;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

void write_json(const std::filesystem::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string trajectory_csv(const RolloutResult<double>& result) {
  std::string out = "depth,position,mass\n";
  for (Index t = 0; t < result.depth(); ++t) {
    const auto& p = result.trajectory[static_cast<std::size_t>(t)].probs();
    for (Index j = 0; j < p.size(); ++j)
      out += std::to_string(t + 1) + "," + std::to_string(j + 1) + "," + format_number(p(j)) + "\n";
  }
  return out;
}

std::string bounds_csv(const std::vector<BoundCheckpoint>& rows) {
  std::string out = "T,sum_lambda,bound,observed_diag_min,P_n1\n";
  for (const auto& r : rows)
    out += std::to_string(r.depth) + "," + format_number(r.cumulative_mixing) + "," + format_number(r.bound) + "," +
           format_number(r.observed_diag_min) + "," + format_number(r.p_n1) + "\n";
  return out;
}

std::string comparison_table_csv(const std::vector<ComparisonRow>& rows) {
  std::string out = "label,spearman_a,spearman_b,spearman_c,wasserstein_a,wasserstein_b,wasserstein_c\n";
  auto cell = [](const std::optional<ComparisonResult>& c, bool rho) {
    return c ? format_number(rho ? c->spearman : c->wasserstein) : std::string();
  };
  for (const auto& r : rows) {
    if (r.label.find_first_of(",\"\n") != std::string::npos)
      throw Error(ErrorCode::InvalidArgument, "comparison label may not contain commas, quotes or newlines");
    out += r.label + "," + cell(r.a, true) + "," + cell(r.b, true) + "," + cell(r.c, true) + "," + cell(r.a, false) + "," +
           cell(r.b, false) + "," + cell(r.c, false) + "\n";
  }
  return out;
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw Error(ErrorCode::Schema, where + ": \"" + s + "\" is not a number");
  return v;
}

std::string validate_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string body = buf.str();
  if (body.find('\r') != std::string::npos) throw Error(ErrorCode::Schema, path.string() + ": CSV must use LF line endings");
  std::istringstream lines(body);
  std::string header;
  std::getline(lines, header);

  std::string kind;
  std::size_t cols = 0;
  if (header == "depth,position,mass") {
    kind = "trajectory_csv";
    cols = 3;
  } else if (header == "T,sum_lambda,bound,observed_diag_min,P_n1") {
    kind = "bounds_csv";
    cols = 5;
  } else if (header == "label,spearman_a,spearman_b,spearman_c,wasserstein_a,wasserstein_b,wasserstein_c") {
    kind = "comparison_table_csv";
    cols = 7;
  } else {
    throw Error(ErrorCode::Schema, path.string() + ": unrecognized CSV header \"" + header + "\"");
  }

  std::string line;
  std::size_t lineno = 1;
  double depth_sum = 0.0;
  long current_depth = -1;
  auto close_depth = [&] {
    if (current_depth >= 0 && std::abs(depth_sum - 1.0) > tolerance::kDistributionSum)
      throw Error(ErrorCode::InvariantViolation,
                  path.string() + ": masses at depth " + std::to_string(current_depth) + " do not sum to 1");
  };
  while (std::getline(lines, line)) {
    ++lineno;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const auto cells = split(line);
    if (cells.size() != cols) throw Error(ErrorCode::Schema, where + ": expected " + std::to_string(cols) + " columns");
    if (kind == "comparison_table_csv") {
      for (std::size_t c = 1; c < cols; ++c)
        if (!cells[c].empty()) parse_cell(cells[c], where);
      continue;
    }
    std::vector<double> v;
    for (const auto& c : cells) v.push_back(parse_cell(c, where));
    if (kind == "trajectory_csv") {
      if (v[2] < 0.0) throw Error(ErrorCode::InvariantViolation, where + ": negative mass");
      const long d = static_cast<long>(v[0]);
      if (d != current_depth) {
        close_depth();
        current_depth = d;
        depth_sum = 0.0;
      }
      depth_sum += v[2];
    } else {
      check_unit_interval(v[2], "bound");
      check_unit_interval(v[4], "P_n1");
    }
  }
  if (kind == "trajectory_csv") close_depth();
  return kind;
}

}  // namespace

std::string validate_file(const std::filesystem::path& path) {
  if (path.extension() == ".csv") return validate_csv(path);
  const json doc = read_json(path);
  const std::string kind = schema_kind(doc);
  if (kind == "kernel")
    kernel_from_json(doc);
  else if (kind == "distribution")
    distribution_from_json(doc);
  else if (kind == "monotonicity_report")
    monotonicity_report_from_json(doc);
  else if (kind == "rollout_config")
    rollout_config_from_json(doc);
  else if (kind == "rollout_result")
    rollout_result_from_json(doc);
  else if (kind == "measured_profile")
    measured_profile_from_json(doc);
  else if (kind == "schedule")
    schedule_file_from_json(doc);
  else if (kind == "logits")
    logit_matrix_from_json(doc);
  else if (kind == "comparison")
    comparison_from_json(doc);
  else if (kind == "content_fit")
    content_fit_from_json(doc);
  else if (kind == "dichotomy_report")
    dichotomy_report_from_json(doc);
  else if (kind == "comparison_batch")
    comparison_batch_from_json(doc);
  else
    throw Error(ErrorCode::Schema, path.string() + ": unknown schema kind \"" + kind + "\"");
  return kind;
}

}  // namespace rollout_lab::io
