#pragma once

// Six-axis evaluation of a trained model: optimality, feasibility, inference
// time, scalability, training efficiency and stability. Undefined values are
// std::nullopt and serialize as JSON null, never as zero.

#include "wgnn/baselines.hpp"
#include "wgnn/channel.hpp"
#include "wgnn/model.hpp"
#include "wgnn/objectives.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace wgnn {

inline constexpr double kFeasibilityTol = 1e-6;

// One model output on one test sample, paired with its label.
struct EvalRecord {
  std::int64_t sample_id = 0;
  double objective = 0.0;
  double power = 0.0;
  bool feasible = true;
  double label = 0.0;
  bool label_valid = true;
};

// 100 * mean(objective) / mean(label) over feasible samples with valid labels.
std::optional<double> optimality(std::span<const EvalRecord> records);
double feasibility_rate(std::span<const double> powers, double power_budget, double tol = kFeasibilityTol);
double feasibility_rate(std::span<const EvalRecord> records);
// Share of feasible samples within n percent of their label.
std::optional<double> stability(std::span<const EvalRecord> records, double n);

struct TimingStats {
  double mean_ms = 0.0;
  double p95_ms = 0.0;
  int repetitions = 0;
  std::size_t samples = 0;
  int threads = 1;
};

// Times fn on every sample, `repetitions` times, after one untimed warm-up pass.
TimingStats inference_time(const std::function<void(const ChannelSample&)>& fn,
                           std::span<const ChannelSample> samples, int repetitions);

struct TrainingEfficiency {
  std::size_t samples_used = 0;
  int epochs_to_converge = 0;
};

// First epoch (1-based) whose validation utility is within 1% of the best.
TrainingEfficiency training_efficiency(std::span<const double> validation_utility, std::size_t samples_used);

// Batched inference over samples; af models are always feasible.
std::vector<BeamMatrix> predict(const ModelConfig& config, const ParamSet& params,
                                std::span<const ChannelSample> samples, double power_budget,
                                std::size_t batch_size = 256);
// Single-sample inference (link/bipartite GNN or MLP).
BeamMatrix predict_one(const ModelConfig& config, const ParamSet& params, const ChannelSample& sample,
                       double power_budget);

// Throws std::invalid_argument when the checkpoint cannot process (K, N).
void check_compatible(const ModelConfig& config, const FeatureDims& dims, int k_users, int n_antennas);

std::vector<EvalRecord> evaluate_records(const ModelConfig& config, const ParamSet& params,
                                         std::span<const ChannelSample> samples, const LabelSet& labels,
                                         const UtilitySpec& spec);

struct ScalabilityRow {
  std::string setting;
  int k_users = 0;
  int n_antennas = 0;
  double power_budget = 0.0;
  bool applicable = true;
  std::optional<double> optimality;
  std::optional<double> feasibility_rate;
  std::string note;

  friend bool operator==(const ScalabilityRow&, const ScalabilityRow&) = default;
};

struct ScaleSetting {
  std::string descriptor;
  const Dataset* dataset = nullptr;
  const LabelSet* labels = nullptr;
};

// Never throws for a dimension mismatch: unusable settings become N/A rows.
std::vector<ScalabilityRow> scalability_eval(const ModelConfig& config, const FeatureDims& dims,
                                             const ParamSet& params, std::span<const ScaleSetting> settings,
                                             const UtilitySpec& spec);

inline const std::vector<double> kStabilityCurve{1.0, 5.0, 10.0, 20.0, 50.0};

struct MetricsReport {
  std::optional<double> optimality;
  double feasibility_rate = 0.0;
  std::optional<double> inference_ms;
  std::optional<double> inference_p95_ms;
  std::vector<ScalabilityRow> scalability;
  std::optional<std::size_t> training_samples;
  std::optional<int> epochs_to_converge;
  double stability_n = 10.0;
  std::optional<double> stability;
  std::map<double, std::optional<double>> stability_curve;
  std::size_t samples = 0;
  std::size_t feasible_samples = 0;
  std::size_t invalid_labels = 0;
  nlohmann::json metadata = nlohmann::json::object();

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

struct EvalOptions {
  double stability_n = 10.0;
  int timing_repetitions = 3;
  std::size_t timing_samples = 100;  // 0 disables timing
};

MetricsReport evaluate(const ModelConfig& config, const ParamSet& params, std::span<const ChannelSample> samples,
                       const LabelSet& labels, const UtilitySpec& spec, const EvalOptions& opts = {});
// Fills the metric fields that depend only on records.
void fill_outcome_metrics(MetricsReport& report, std::span<const EvalRecord> records, double stability_n);

nlohmann::json to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);

// Radar axes in fixed order, values normalized to [0, 1].
struct RadarAxis {
  std::string axis;
  std::optional<double> value;
  std::optional<double> normalized;
  std::string normalization;
};
std::vector<RadarAxis> radar_axes(const MetricsReport& report);

enum class ReportFormat { json, csv };
void emit_report(const MetricsReport& report, const std::filesystem::path& path, ReportFormat format);
MetricsReport read_report(const std::filesystem::path& path);

}  // namespace wgnn
