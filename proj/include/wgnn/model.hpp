#pragma once

// Message-passing GNN for beamforming, plus the MLP comparator.
//
// Layer l (per relation, i.e. destination node type):
//   message   m_{j->i} = leaky(W_neigh x_j + W_edge e_ji + b_msg)
//   aggregate agg_i    = mean/sum/max over in-edges, or multi-head attention
//   update    x_i'     = leaky(W_self x_i + W_agg agg_i + b) [+ x_i if residual, l > 0]
// Readout is a shared two-layer MLP: per user node (link graph) or per
// (antenna, user) pair (bipartite). In af mode the output is scaled onto the
// sum-power ball; pm and ldm emit the raw beams.

#include "wgnn/autodiff.hpp"
#include "wgnn/graph.hpp"
#include "wgnn/objectives.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace wgnn {

enum class Aggregation { mean, sum, max, attention };
enum class ConstraintMode { af, pm, ldm };
enum class BaselineModel { none, mlp };

std::string_view to_string(Aggregation a);
std::string_view to_string(ConstraintMode c);
std::string_view to_string(GraphKind g);
Aggregation parse_aggregation(std::string_view s);
ConstraintMode parse_constraint(std::string_view s);
GraphKind parse_graph_kind(std::string_view s);

struct ModelConfig {
  GraphKind representation = GraphKind::link_graph;
  int depth = 3;
  int hidden_dim = 64;
  int heads = 4;
  Aggregation aggregation = Aggregation::mean;
  bool residual = false;
  int readout_hidden = 64;
  ConstraintMode constraint_mode = ConstraintMode::af;
  double leaky_alpha = 0.2;
  BaselineModel baseline_model = BaselineModel::none;
  EdgeFeatureMode edge_features = EdgeFeatureMode::none;
  // Width of the learned per-type initial node features (bipartite).
  int type_embedding_dim = 8;

  void validate() const;
  bool is_mlp() const { return baseline_model == BaselineModel::mlp; }

  // gcn: mean aggregation; gat: 4-head attention; resgat: attention + residual;
  // mlp: dense comparator on the flattened channel.
  static ModelConfig preset(std::string_view name);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Dimensions the parameter shapes depend on. k_users only matters for the MLP.
struct FeatureDims {
  int n_antennas = 0;
  int k_users = 0;
  int node_dim = 0;
  int edge_dim = 0;
};

FeatureDims feature_dims(const ModelConfig& config, int k_users, int n_antennas);

inline constexpr std::string_view kLambdaName = "dual.lambda";

struct ParamSet {
  std::map<std::string, ad::Tensor> tensors;

  std::size_t count() const;
  bool has_lambda() const { return tensors.contains(std::string(kLambdaName)); }
  double lambda() const;
  void set_lambda(double value);
  friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

// Glorot-uniform weights, zero biases, lambda = 0.1 in ldm mode.
ParamSet init_params(const ModelConfig& config, const FeatureDims& dims, std::uint64_t seed);

using ParamVars = std::map<std::string, ad::Var>;
// Places every tensor on the tape; lambda is always a constant.
ParamVars bind_params(ad::Tape& tape, const ParamSet& params, bool trainable);

// Everything one forward pass over a batch of samples needs.
struct ModelBatch {
  std::optional<GraphBatch> graphs;  // absent for the MLP
  ChannelBatch channels;
};

ModelBatch make_model_batch(const ModelConfig& config, std::span<const ChannelSample> samples);

struct ForwardOutput {
  BeamVars beams;     // after the output activation (af) or raw (pm, ldm)
  ad::Var raw_power;  // [B] ||W_raw||_F^2
};

ForwardOutput forward(const ModelConfig& config, const ParamVars& params, const ModelBatch& batch,
                      double power_budget);

// Node features after the last message-passing layer.
ad::Var embed(const ModelConfig& config, const ParamVars& params, const GraphBatch& graphs);

// One message-passing layer over all relations of the batch.
ad::Var mp_layer(const ModelConfig& config, const ParamVars& params, const GraphBatch& graphs,
                 ad::Var node_feats, int layer);
// Multi-head attention aggregation for one relation; edges given by index.
ad::Var attention_aggregate(const ModelConfig& config, const ParamVars& params, const GraphBatch& graphs,
                            ad::Var node_feats, const std::string& prefix,
                            std::span<const std::size_t> edge_ids);

// Single-sample conveniences.
BeamMatrix model_forward(const ModelConfig& config, const ParamSet& params, const RadioGraph& graph,
                         double power_budget);
BeamMatrix mlp_baseline_forward(const ParamSet& params, const ModelConfig& config,
                                const ChannelSample& sample, double power_budget);

struct Checkpoint {
  ModelConfig config;
  FeatureDims dims;
  ParamSet params;
  nlohmann::json metadata = nlohmann::json::object();
};

nlohmann::json to_json(const ParamSet& params);
ParamSet params_from_json(const nlohmann::json& j);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace wgnn
