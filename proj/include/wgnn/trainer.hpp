#pragma once

// Mini-batch Adam training of the beamforming models, supervised or
// unsupervised, with af / pm / ldm constraint handling, plus the ablation
// recipes that train families of variants on shared data.

#include "wgnn/baselines.hpp"
#include "wgnn/metrics.hpp"
#include "wgnn/model.hpp"
#include "wgnn/objectives.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace wgnn {

enum class Learning { supervised, unsupervised };
Learning parse_learning(std::string_view s);
std::string_view to_string(Learning l);

struct TrainConfig {
  UtilitySpec utility;
  Learning learning = Learning::unsupervised;
  int batch_size = 64;
  int epochs = 200;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  // pm: rho = min(rho_cap, rho0 * rho_factor^floor((epoch-1) / rho_every))
  double rho0 = 1.0;
  double rho_factor = 2.0;
  int rho_every = 20;
  double rho_cap = 1e4;
  // ldm step size for the projected dual ascent on lambda
  double eta_dual = 0.01;
  std::uint64_t seed = 0;
  int patience = 20;
  // Share of the training samples held out for validation.
  double validation_fraction = 0.1;

  void validate() const;
  double rho_at(int epoch) const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  // Mean validation utility after af-projection of every output; drives early
  // stopping and checkpoint selection.
  double val_utility = 0.0;
  // Mean as-emitted utility with infeasible outputs scored 0 (pm/ldm diagnostics).
  double val_score = 0.0;
  double val_feasibility = 0.0;
  std::optional<double> lambda;
  std::optional<double> rho;
  double wall_ms = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  bool stopped_early = false;
  std::size_t train_samples = 0;
  std::size_t validation_samples = 0;

  std::vector<double> validation_utility() const;
  // Equality ignoring wall-clock fields.
  bool same_trajectory(const TrainLog& other) const;
};

void write_train_log(const std::filesystem::path& path, const TrainLog& log, const nlohmann::json& header);
TrainLog read_train_log(const std::filesystem::path& path);

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::map<std::string, ad::Tensor> m;
  std::map<std::string, ad::Tensor> v;
  long step = 0;
};

// Bias-corrected Adam on every tensor with a gradient; the Lagrange
// multiplier is never touched here.
void adam_step(ParamSet& params, const std::map<std::string, ad::Tensor>& grads, AdamState& state,
               const AdamHyper& hyper);

struct TrainResult {
  ParamSet params;
  TrainLog log;
};

// Raised on a non-finite loss. Carries the parameters of the last finished epoch.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, TrainResult last_good)
      : std::runtime_error(what), last_good_(std::move(last_good)) {}
  const TrainResult& last_good() const { return last_good_; }

 private:
  TrainResult last_good_;
};

// Labels are required for supervised learning and matched by sample_id.
TrainResult train(const ModelConfig& model, const TrainConfig& cfg, std::span<const ChannelSample> samples,
                  const LabelSet* labels = nullptr);

// ---- ablation ----------------------------------------------------------------

struct AblationVariant {
  std::string name;
  ModelConfig config;
};

// "mp-vs-attention-vs-residual": gcn, gat, resgat
// "heads": attention with 1, 2, 4, 8 heads
// "depth": depth 1..6, residual off and on
std::vector<AblationVariant> ablation_recipe(std::string_view recipe, const ModelConfig& base = {});
std::vector<std::string> ablation_recipes();

struct AblationEntry {
  AblationVariant variant;
  TrainResult result;
  MetricsReport report;
};

std::vector<AblationEntry> ablate(std::string_view recipe, const ModelConfig& base, const TrainConfig& cfg,
                                  std::span<const ChannelSample> train_samples,
                                  std::span<const ChannelSample> test_samples, const LabelSet& test_labels,
                                  const LabelSet* train_labels = nullptr, const EvalOptions& eval = {},
                                  int jobs = 1);

}  // namespace wgnn
