#ifndef ROLLOUT_LAB_IO_HPP
#define ROLLOUT_LAB_IO_HPP

// Interchange files. Every JSON document carries {"schema": "<kind>/1"};
// positions in files are 1-based. CSV files have a header row and LF endings;
// numbers use the shortest decimal form that round-trips.

#include "rollout_lab/asymptotics.hpp"
#include "rollout_lab/kernels.hpp"
#include "rollout_lab/metrics.hpp"
#include "rollout_lab/rollout.hpp"
#include "rollout_lab/stochastic_order.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rollout_lab::io {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

enum class Provenance { GradientAttribution, Synthetic, Other };

struct MeasuredProfile {
  std::string model_id;
  std::string dataset_id;
  Distribution influence = Distribution::uniform(1);
  Provenance provenance = Provenance::Other;

  Index n() const { return influence.size(); }
};

struct ScheduleFile {
  std::string model_id;
  std::string dataset_id;
  Index sequence_length = 0;
  MixingSchedule<double> schedule = MixingSchedule<double>::constant(1, 0.0);

  Index depth() const { return schedule.depth(); }
};

/// Pre-softmax logits; only admissible entries are meaningful.
struct LogitMatrix {
  MaskSpec mask;
  MatrixXd logits;
};

/// Standalone rollout result document (the in-memory RolloutResult plus the
/// variant that produced it).
struct RolloutDocument {
  Variant variant = Variant::ResidualAware;
  RolloutResult<double> result;
};

/// Batch comparison manifest: each row pairs one measured profile with up to
/// three predicted profiles keyed by variant. Relative paths are kept as written.
struct ComparisonBatch {
  struct Row {
    std::string label;
    std::string meas;
    std::vector<std::pair<Variant, std::string>> pred;
  };
  std::vector<Row> rows;
};

/// "<kind>/1" tag and the kind names accepted by `validate`.
std::string schema_tag(const std::string& kind);
std::string schema_kind(const json& doc);
void require_schema(const json& doc, const std::string& kind);

json to_json(const MaskSpec& mask);
MaskSpec mask_from_json(const json& j, Index n);

json to_json(const Kernel& kernel);
Kernel kernel_from_json(const json& j);

json to_json(const Distribution& d);
Distribution distribution_from_json(const json& j);

json to_json(const MonotonicityReport& r);
MonotonicityReport monotonicity_report_from_json(const json& j);

json to_json(const RolloutConfig<double>& config);
RolloutConfig<double> rollout_config_from_json(const json& j);

json to_json(const RolloutDocument& doc);
RolloutDocument rollout_result_from_json(const json& j);

json to_json(const MeasuredProfile& p);
MeasuredProfile measured_profile_from_json(const json& j);

json to_json(const ScheduleFile& s);
ScheduleFile schedule_file_from_json(const json& j);

json to_json(const LogitMatrix& m);
LogitMatrix logit_matrix_from_json(const json& j);

json to_json(const ComparisonResult& c);
ComparisonResult comparison_from_json(const json& j);

json to_json(const ContentFit& f);
ContentFit content_fit_from_json(const json& j);

json to_json(const DichotomyReport& r);
DichotomyReport dichotomy_report_from_json(const json& j);

json to_json(const ComparisonBatch& b);
ComparisonBatch comparison_batch_from_json(const json& j);

const char* to_string(Provenance p);
Variant variant_from_tag(const std::string& tag);

json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& doc);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Shortest decimal that parses back to the same double.
std::string format_number(double v);

/// Columns: depth,position,mass (1-based depth and position).
std::string trajectory_csv(const RolloutResult<double>& result);
/// Columns: T,sum_lambda,bound,observed_diag_min,P_n1.
std::string bounds_csv(const std::vector<BoundCheckpoint>& rows);

struct ComparisonRow {
  std::string label;
  std::optional<ComparisonResult> a, b, c;
};
/// Rows per model/config; columns variant a/b/c for each metric. Missing
/// variants are left empty.
std::string comparison_table_csv(const std::vector<ComparisonRow>& rows);

/// Loads and checks any interchange file (JSON by schema tag, CSV by header).
/// Returns the detected kind; throws Error on any violation.
std::string validate_file(const std::filesystem::path& path);

}  // namespace rollout_lab::io

#endif  // ROLLOUT_LAB_IO_HPP
