#include "wgnn/model.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

namespace wgnn {

using nlohmann::json;

// ---- names and config ---------------------------------------------------------

std::string_view to_string(Aggregation a) {
  switch (a) {
    case Aggregation::mean: return "mean";
    case Aggregation::sum: return "sum";
    case Aggregation::max: return "max";
    case Aggregation::attention: return "attention";
  }
  return "?";
}

std::string_view to_string(ConstraintMode c) {
  switch (c) {
    case ConstraintMode::af: return "af";
    case ConstraintMode::pm: return "pm";
    case ConstraintMode::ldm: return "ldm";
  }
  return "?";
}

std::string_view to_string(GraphKind g) {
  return g == GraphKind::link_graph ? "link_graph" : "bipartite";
}

Aggregation parse_aggregation(std::string_view s) {
  if (s == "mean") return Aggregation::mean;
  if (s == "sum") return Aggregation::sum;
  if (s == "max") return Aggregation::max;
  if (s == "attention") return Aggregation::attention;
  throw std::invalid_argument("unknown aggregation '" + std::string(s) + "'");
}

ConstraintMode parse_constraint(std::string_view s) {
  if (s == "af") return ConstraintMode::af;
  if (s == "pm") return ConstraintMode::pm;
  if (s == "ldm") return ConstraintMode::ldm;
  throw std::invalid_argument("unknown constraint mode '" + std::string(s) + "' (expected af|pm|ldm)");
}

GraphKind parse_graph_kind(std::string_view s) {
  if (s == "link_graph") return GraphKind::link_graph;
  if (s == "bipartite") return GraphKind::bipartite;
  throw std::invalid_argument("unknown representation '" + std::string(s) + "'");
}

void ModelConfig::validate() const {
  if (depth < 1) throw std::invalid_argument("model config: depth must be >= 1");
  if (hidden_dim < 1) throw std::invalid_argument("model config: hidden_dim must be >= 1");
  if (heads < 1) throw std::invalid_argument("model config: heads must be >= 1");
  if (readout_hidden < 1) throw std::invalid_argument("model config: readout_hidden must be >= 1");
  if (type_embedding_dim < 1) throw std::invalid_argument("model config: type_embedding_dim must be >= 1");
  if (!(leaky_alpha >= 0.0 && leaky_alpha < 1.0)) {
    throw std::invalid_argument("model config: leaky_alpha must lie in [0, 1)");
  }
  if (aggregation == Aggregation::attention && hidden_dim % heads != 0) {
    throw std::invalid_argument("model config: hidden_dim " + std::to_string(hidden_dim) +
                                " not divisible by heads " + std::to_string(heads));
  }
}

ModelConfig ModelConfig::preset(std::string_view name) {
  ModelConfig c;
  if (name == "gcn") {
    c.aggregation = Aggregation::mean;
  } else if (name == "gat") {
    c.aggregation = Aggregation::attention;
    c.heads = 4;
  } else if (name == "resgat") {
    c.aggregation = Aggregation::attention;
    c.heads = 4;
    c.residual = true;
  } else if (name == "mlp") {
    c.baseline_model = BaselineModel::mlp;
  } else {
    throw std::invalid_argument("unknown model '" + std::string(name) + "' (expected gcn|gat|resgat|mlp)");
  }
  return c;
}

json to_json(const ModelConfig& c) {
  return json{{"representation", to_string(c.representation)},
              {"depth", c.depth},
              {"hidden_dim", c.hidden_dim},
              {"heads", c.heads},
              {"aggregation", to_string(c.aggregation)},
              {"residual", c.residual},
              {"readout_hidden", c.readout_hidden},
              {"constraint_mode", to_string(c.constraint_mode)},
              {"leaky_alpha", c.leaky_alpha},
              {"baseline_model", c.is_mlp() ? "mlp" : "none"},
              {"edge_features", c.edge_features == EdgeFeatureMode::none ? "none" : "correlation"},
              {"type_embedding_dim", c.type_embedding_dim}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  if (j.contains("representation")) c.representation = parse_graph_kind(j["representation"].get<std::string>());
  if (j.contains("depth")) c.depth = j["depth"].get<int>();
  if (j.contains("hidden_dim")) c.hidden_dim = j["hidden_dim"].get<int>();
  if (j.contains("heads")) c.heads = j["heads"].get<int>();
  if (j.contains("aggregation")) c.aggregation = parse_aggregation(j["aggregation"].get<std::string>());
  if (j.contains("residual")) c.residual = j["residual"].get<bool>();
  if (j.contains("readout_hidden")) c.readout_hidden = j["readout_hidden"].get<int>();
  if (j.contains("constraint_mode")) c.constraint_mode = parse_constraint(j["constraint_mode"].get<std::string>());
  if (j.contains("leaky_alpha")) c.leaky_alpha = j["leaky_alpha"].get<double>();
  if (j.contains("baseline_model")) {
    const auto b = j["baseline_model"].get<std::string>();
    if (b != "none" && b != "mlp") throw std::invalid_argument("unknown baseline_model '" + b + "'");
    c.baseline_model = b == "mlp" ? BaselineModel::mlp : BaselineModel::none;
  }
  if (j.contains("edge_features")) {
    const auto e = j["edge_features"].get<std::string>();
    if (e != "none" && e != "correlation") throw std::invalid_argument("unknown edge_features '" + e + "'");
    c.edge_features = e == "none" ? EdgeFeatureMode::none : EdgeFeatureMode::correlation;
  }
  if (j.contains("type_embedding_dim")) c.type_embedding_dim = j["type_embedding_dim"].get<int>();
  c.validate();
  return c;
}

FeatureDims feature_dims(const ModelConfig& config, int k_users, int n_antennas) {
  FeatureDims d;
  d.n_antennas = n_antennas;
  d.k_users = k_users;
  if (config.representation == GraphKind::link_graph) {
    d.node_dim = 2 * n_antennas;
    d.edge_dim = config.edge_features == EdgeFeatureMode::correlation ? 1 : 0;
  } else {
    d.node_dim = 0;
    d.edge_dim = 2;
  }
  return d;
}

// ---- parameters ------------------------------------------------------------------

std::size_t ParamSet::count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors) n += t.size();
  return n;
}

double ParamSet::lambda() const {
  auto it = tensors.find(std::string(kLambdaName));
  if (it == tensors.end()) throw std::logic_error("ParamSet: no Lagrange multiplier");
  return it->second[0];
}

void ParamSet::set_lambda(double value) {
  if (value < 0.0) throw std::invalid_argument("ParamSet: lambda must be >= 0");
  tensors[std::string(kLambdaName)] = ad::Tensor(ad::Shape{1}, value);
}

namespace {

enum class InitKind { glorot, zero };

struct ParamSpec {
  std::string name;
  ad::Shape shape;
  InitKind init;
};

std::vector<std::string> relation_names(GraphKind kind) {
  if (kind == GraphKind::link_graph) return {"link"};
  return {"to_ant", "to_user"};
}

std::string layer_prefix(int layer, const std::string& rel) {
  return "l" + std::to_string(layer) + "." + rel + ".";
}

std::vector<ParamSpec> param_specs(const ModelConfig& c, const FeatureDims& dims) {
  std::vector<ParamSpec> specs;
  auto weight = [&](std::string name, std::size_t in, std::size_t out) {
    specs.push_back({std::move(name), {in, out}, InitKind::glorot});
  };
  auto bias = [&](std::string name, std::size_t n) {
    specs.push_back({std::move(name), {n}, InitKind::zero});
  };
  const auto d = static_cast<std::size_t>(c.hidden_dim);
  const auto N = static_cast<std::size_t>(dims.n_antennas);

  if (c.is_mlp()) {
    const auto io = static_cast<std::size_t>(2 * dims.k_users * dims.n_antennas);
    weight("mlp.w0", io, d);
    bias("mlp.b0", d);
    weight("mlp.w1", d, d);
    bias("mlp.b1", d);
    weight("mlp.w2", d, io);
    bias("mlp.b2", io);
  } else {
    std::size_t in_dim = static_cast<std::size_t>(dims.node_dim);
    if (c.representation == GraphKind::bipartite) {
      in_dim = static_cast<std::size_t>(c.type_embedding_dim);
      weight("embed", 2, in_dim);
    }
    const auto e = static_cast<std::size_t>(dims.edge_dim);
    for (int l = 0; l < c.depth; ++l) {
      for (const std::string& rel : relation_names(c.representation)) {
        const std::string p = layer_prefix(l, rel);
        if (c.aggregation == Aggregation::attention) {
          const auto dh = d / static_cast<std::size_t>(c.heads);
          weight(p + "w_proj", in_dim, d);
          weight(p + "a_dst", dh, static_cast<std::size_t>(c.heads));
          weight(p + "a_src", dh, static_cast<std::size_t>(c.heads));
          if (e > 0) weight(p + "w_edge", e, d);
        } else {
          weight(p + "w_neigh", in_dim, d);
          if (e > 0) weight(p + "w_edge", e, d);
          bias(p + "b_msg", d);
        }
        weight(p + "w_self", in_dim, d);
        weight(p + "w_agg", d, d);
        bias(p + "b", d);
      }
      in_dim = d;
    }
    const auto rh = static_cast<std::size_t>(c.readout_hidden);
    if (c.representation == GraphKind::link_graph) {
      weight("readout.w0", d, rh);
      bias("readout.b0", rh);
      weight("readout.w1", rh, 2 * N);
      bias("readout.b1", 2 * N);
    } else {
      weight("readout.w0", 2 * d + 2, rh);
      bias("readout.b0", rh);
      weight("readout.w1", rh, 2);
      bias("readout.b1", 2);
    }
  }
  return specs;
}

}  // namespace

ParamSet init_params(const ModelConfig& config, const FeatureDims& dims, std::uint64_t seed) {
  config.validate();
  ParamSet ps;
  std::mt19937_64 rng(seed);
  for (const ParamSpec& s : param_specs(config, dims)) {
    ad::Tensor t(s.shape, 0.0);
    if (s.init == InitKind::glorot) {
      const double bound = std::sqrt(6.0 / static_cast<double>(s.shape[0] + s.shape[1]));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (double& x : t.data()) x = u(rng);
    }
    ps.tensors.emplace(s.name, std::move(t));
  }
  if (config.constraint_mode == ConstraintMode::ldm) ps.set_lambda(0.1);
  return ps;
}

ParamVars bind_params(ad::Tape& tape, const ParamSet& params, bool trainable) {
  ParamVars vars;
  for (const auto& [name, t] : params.tensors) {
    const bool learn = trainable && name != kLambdaName;
    vars.emplace(name, learn ? tape.variable(t) : tape.constant(t));
  }
  return vars;
}

ModelBatch make_model_batch(const ModelConfig& config, std::span<const ChannelSample> samples) {
  ModelBatch b{std::nullopt, make_channel_batch(samples)};
  if (!config.is_mlp()) {
    std::vector<RadioGraph> graphs;
    graphs.reserve(samples.size());
    for (const ChannelSample& s : samples) {
      graphs.push_back(build_graph(s, config.representation, config.edge_features));
    }
    b.graphs = make_batch(graphs);
  }
  return b;
}

// ---- forward ----------------------------------------------------------------------

namespace {

ad::Var param(const ParamVars& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw std::invalid_argument("model: missing parameter '" + name + "'");
  return it->second;
}

struct Relation {
  std::string name;
  NodeType dst_type;
  std::vector<std::size_t> edges;
};

std::vector<Relation> relations(const GraphBatch& g) {
  if (g.kind == GraphKind::link_graph) {
    Relation r{"link", NodeType::link, std::vector<std::size_t>(g.edge_src.size())};
    for (std::size_t e = 0; e < r.edges.size(); ++e) r.edges[e] = e;
    return {std::move(r)};
  }
  Relation to_ant{"to_ant", NodeType::antenna, {}};
  Relation to_user{"to_user", NodeType::user, {}};
  for (std::size_t e = 0; e < g.edge_src.size(); ++e) {
    (g.node_types[g.edge_dst[e]] == NodeType::antenna ? to_ant : to_user).edges.push_back(e);
  }
  return {std::move(to_ant), std::move(to_user)};
}

std::vector<std::size_t> pick(const std::vector<std::size_t>& v, std::span<const std::size_t> idx) {
  std::vector<std::size_t> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = v[idx[i]];
  return out;
}

std::optional<ad::Var> edge_feature_var(ad::Tape& tape, const GraphBatch& g,
                                        std::span<const std::size_t> edge_ids) {
  if (!g.edge_features) return std::nullopt;
  const ad::Tensor& ef = *g.edge_features;
  if (edge_ids.size() == ef.rows()) return tape.constant(ef);
  const std::size_t d = ef.cols();
  ad::Tensor sub(ad::Shape{edge_ids.size(), d});
  for (std::size_t i = 0; i < edge_ids.size(); ++i) {
    for (std::size_t c = 0; c < d; ++c) sub.at(i, c) = ef.at(edge_ids[i], c);
  }
  return tape.constant(std::move(sub));
}

// A graph without edges (a single user) aggregates to zero everywhere.
ad::Var no_messages(ad::Tape& tape, const GraphBatch& g, std::size_t width) {
  return tape.constant(ad::Tensor(ad::Shape{g.num_nodes, width}, 0.0));
}

ad::Var mean_field_aggregate(const ModelConfig& config, const ParamVars& params, const GraphBatch& g,
                             ad::Var x, const std::string& prefix, std::span<const std::size_t> edge_ids) {
  ad::Tape& tape = *x.tape;
  ad::Var w_neigh = param(params, prefix + "w_neigh");
  if (edge_ids.empty()) return no_messages(tape, g, w_neigh.value().cols());
  const auto src = pick(g.edge_src, edge_ids);
  const auto dst = pick(g.edge_dst, edge_ids);
  ad::Var msg = ad::gather_rows(ad::matmul(x, w_neigh), src);
  if (auto ef = edge_feature_var(tape, g, edge_ids)) {
    msg = ad::add(msg, ad::matmul(*ef, param(params, prefix + "w_edge")));
  }
  msg = ad::leaky_relu(ad::add_row(msg, param(params, prefix + "b_msg")), config.leaky_alpha);
  const ad::SegmentMode mode = config.aggregation == Aggregation::sum   ? ad::SegmentMode::sum
                               : config.aggregation == Aggregation::max ? ad::SegmentMode::max
                                                                        : ad::SegmentMode::mean;
  return ad::segment_reduce(msg, dst, g.num_nodes, mode);
}

constexpr double kAttentionSlope = 0.2;

}  // namespace

ad::Var attention_aggregate(const ModelConfig& config, const ParamVars& params, const GraphBatch& g,
                            ad::Var x, const std::string& prefix, std::span<const std::size_t> edge_ids) {
  if (config.hidden_dim % config.heads != 0) {
    throw std::invalid_argument("attention: hidden_dim not divisible by heads");
  }
  ad::Tape& tape = *x.tape;
  if (edge_ids.empty()) return no_messages(tape, g, static_cast<std::size_t>(config.hidden_dim));
  const auto src = pick(g.edge_src, edge_ids);
  const auto dst = pick(g.edge_dst, edge_ids);
  const auto dh = static_cast<std::size_t>(config.hidden_dim / config.heads);

  ad::Var z = ad::matmul(x, param(params, prefix + "w_proj"));
  ad::Var msg = ad::gather_rows(z, src);
  if (auto ef = edge_feature_var(tape, g, edge_ids)) {
    msg = ad::add(msg, ad::matmul(*ef, param(params, prefix + "w_edge")));
  }
  ad::Var z_dst = ad::gather_rows(z, dst);
  ad::Var a_dst = param(params, prefix + "a_dst");
  ad::Var a_src = param(params, prefix + "a_src");

  std::vector<ad::Var> heads;
  for (int h = 0; h < config.heads; ++h) {
    const auto lo = static_cast<std::size_t>(h) * dh;
    ad::Var m_h = ad::slice(msg, 1, lo, lo + dh);
    ad::Var zd_h = ad::slice(z_dst, 1, lo, lo + dh);
    const auto hc = static_cast<std::size_t>(h);
    ad::Var score = ad::add(ad::matmul(zd_h, ad::slice(a_dst, 1, hc, hc + 1)),
                            ad::matmul(m_h, ad::slice(a_src, 1, hc, hc + 1)));
    ad::Var alpha = ad::segment_softmax(ad::leaky_relu(score, kAttentionSlope), dst, g.num_nodes);
    heads.push_back(ad::segment_reduce(ad::mul_rows(m_h, alpha), dst, g.num_nodes, ad::SegmentMode::sum));
  }
  return heads.size() == 1 ? heads[0] : ad::concat(heads, 1);
}

ad::Var mp_layer(const ModelConfig& config, const ParamVars& params, const GraphBatch& g, ad::Var x,
                 int layer) {
  const bool residual = config.residual && layer > 0 &&
                        x.value().cols() == static_cast<std::size_t>(config.hidden_dim);
  std::vector<ad::Var> parts;
  for (const Relation& rel : relations(g)) {
    const std::string prefix = layer_prefix(layer, rel.name);
    ad::Var agg = config.aggregation == Aggregation::attention
                      ? attention_aggregate(config, params, g, x, prefix, rel.edges)
                      : mean_field_aggregate(config, params, g, x, prefix, rel.edges);
    auto update = [&](ad::Var xs, ad::Var as) {
      ad::Var u = ad::add(ad::matmul(xs, param(params, prefix + "w_self")),
                          ad::matmul(as, param(params, prefix + "w_agg")));
      u = ad::leaky_relu(ad::add_row(u, param(params, prefix + "b")), config.leaky_alpha);
      return residual ? ad::add(u, xs) : u;
    };
    if (g.kind == GraphKind::link_graph) return update(x, agg);

    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < g.num_nodes; ++i) {
      if (g.node_types[i] == rel.dst_type) rows.push_back(i);
    }
    ad::Var u = update(ad::gather_rows(x, rows), ad::gather_rows(agg, rows));
    parts.push_back(ad::segment_reduce(u, rows, g.num_nodes, ad::SegmentMode::sum));
  }
  return ad::add(parts[0], parts[1]);
}

ad::Var embed(const ModelConfig& config, const ParamVars& params, const GraphBatch& g) {
  if (g.kind != config.representation) {
    throw std::invalid_argument("model: graph is " + std::string(to_string(g.kind)) +
                                " but the model expects " + std::string(to_string(config.representation)));
  }
  ad::Var any = params.begin()->second;
  ad::Tape& tape = *any.tape;
  ad::Var x;
  if (g.kind == GraphKind::link_graph) {
    x = tape.constant(g.node_features.value());
  } else {
    std::vector<std::size_t> type_idx(g.num_nodes);
    for (std::size_t i = 0; i < g.num_nodes; ++i) type_idx[i] = g.node_types[i] == NodeType::antenna ? 0 : 1;
    x = ad::gather_rows(param(params, "embed"), type_idx);
  }
  for (int l = 0; l < config.depth; ++l) x = mp_layer(config, params, g, x, l);
  return x;
}

namespace {

ad::Var readout_mlp(const ModelConfig& config, const ParamVars& params, ad::Var in) {
  ad::Var h = ad::leaky_relu(ad::add_row(ad::matmul(in, param(params, "readout.w0")),
                                         param(params, "readout.b0")),
                             config.leaky_alpha);
  return ad::add_row(ad::matmul(h, param(params, "readout.w1")), param(params, "readout.b1"));
}

BeamVars gnn_raw_beams(const ModelConfig& config, const ParamVars& params, const ModelBatch& batch) {
  const GraphBatch& g = batch.graphs.value();
  const ChannelBatch& ch = batch.channels;
  const auto N = static_cast<std::size_t>(g.n_antennas);
  ad::Var x = embed(config, params, g);
  if (g.kind == GraphKind::link_graph) {
    ad::Var out = readout_mlp(config, params, ad::gather_rows(x, g.user_nodes));
    return BeamVars{ad::slice(out, 1, 0, N), ad::slice(out, 1, N, 2 * N)};
  }
  // (user, antenna) pairs in user-major order
  const std::size_t U = g.user_nodes.size();
  std::vector<std::size_t> ant_idx;
  std::vector<std::size_t> user_idx;
  ad::Tensor pair_feat(ad::Shape{U * N, 2});
  for (std::size_t u = 0; u < U; ++u) {
    const std::size_t gi = g.graph_of_user[u];
    for (std::size_t m = 0; m < N; ++m) {
      ant_idx.push_back(g.antenna_nodes[gi * N + m]);
      user_idx.push_back(g.user_nodes[u]);
      pair_feat.at(u * N + m, 0) = ch.h_re.at(u, m);
      pair_feat.at(u * N + m, 1) = ch.h_im.at(u, m);
    }
  }
  ad::Tape& tape = *x.tape;
  ad::Var in = ad::concat({ad::gather_rows(x, ant_idx), ad::gather_rows(x, user_idx),
                           tape.constant(std::move(pair_feat))},
                          1);
  ad::Var out = readout_mlp(config, params, in);
  return BeamVars{ad::reshape(ad::slice(out, 1, 0, 1), {U, N}),
                  ad::reshape(ad::slice(out, 1, 1, 2), {U, N})};
}

BeamVars mlp_raw_beams(const ModelConfig& config, const ParamVars& params, const ChannelBatch& ch) {
  const ad::Tensor& w0 = param(params, "mlp.w0").value();
  const std::size_t io = w0.rows();
  const auto N = static_cast<std::size_t>(ch.n_antennas);
  for (int k : ch.users_per_sample) {
    if (2 * static_cast<std::size_t>(k) * N != io) {
      throw std::invalid_argument("mlp: trained for input width " + std::to_string(io) +
                                  " but sample has K=" + std::to_string(k) + ", N=" + std::to_string(N));
    }
  }
  const std::size_t K = io / (2 * N);
  const std::size_t B = ch.num_samples;
  // row b = [Re H_b row-major, Im H_b row-major]
  ad::Tensor in(ad::Shape{B, io});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < K * N; ++i) {
      in.at(b, i) = ch.h_re[b * K * N + i];
      in.at(b, K * N + i) = ch.h_im[b * K * N + i];
    }
  }
  ad::Tape& tape = *param(params, "mlp.w0").tape;
  ad::Var h = tape.constant(std::move(in));
  h = ad::leaky_relu(ad::add_row(ad::matmul(h, param(params, "mlp.w0")), param(params, "mlp.b0")), config.leaky_alpha);
  h = ad::leaky_relu(ad::add_row(ad::matmul(h, param(params, "mlp.w1")), param(params, "mlp.b1")), config.leaky_alpha);
  ad::Var out = ad::add_row(ad::matmul(h, param(params, "mlp.w2")), param(params, "mlp.b2"));
  out = ad::reshape(out, {B * K, 2 * N});
  return BeamVars{ad::slice(out, 1, 0, N), ad::slice(out, 1, N, 2 * N)};
}

}  // namespace

ForwardOutput forward(const ModelConfig& config, const ParamVars& params, const ModelBatch& batch,
                      double power_budget) {
  if (params.empty()) throw std::invalid_argument("model: empty parameter set");
  ad::Tape& tape = *params.begin()->second.tape;
  BeamVars raw = config.is_mlp() ? mlp_raw_beams(config, params, batch.channels)
                                 : gnn_raw_beams(config, params, batch);
  ForwardOutput out;
  if (config.constraint_mode == ConstraintMode::af) {
    out.beams = power_activation(tape, batch.channels, raw, power_budget, &out.raw_power);
  } else {
    out.beams = raw;
    out.raw_power = sample_power(tape, batch.channels, raw);
  }
  return out;
}

BeamMatrix model_forward(const ModelConfig& config, const ParamSet& params, const RadioGraph& graph,
                         double power_budget) {
  if (config.is_mlp()) throw std::invalid_argument("model_forward: use mlp_baseline_forward for the MLP");
  ad::Tape tape;
  ParamVars vars = bind_params(tape, params, false);
  ChannelSample sample = channel_of(graph);
  ModelBatch batch{make_batch(std::span<const RadioGraph>(&graph, 1)),
                   make_channel_batch(std::span<const ChannelSample>(&sample, 1))};
  ForwardOutput out = forward(config, vars, batch, power_budget);
  return BeamMatrix::from(beams_of_sample(batch.channels, out.beams.re.value(), out.beams.im.value(), 0),
                          out.raw_power.value()[0], power_budget);
}

BeamMatrix mlp_baseline_forward(const ParamSet& params, const ModelConfig& config,
                                const ChannelSample& sample, double power_budget) {
  if (!config.is_mlp()) throw std::invalid_argument("mlp_baseline_forward: config is not an MLP");
  ad::Tape tape;
  ParamVars vars = bind_params(tape, params, false);
  ModelBatch batch{std::nullopt, make_channel_batch(std::span<const ChannelSample>(&sample, 1))};
  ForwardOutput out = forward(config, vars, batch, power_budget);
  return BeamMatrix::from(beams_of_sample(batch.channels, out.beams.re.value(), out.beams.im.value(), 0),
                          out.raw_power.value()[0], power_budget);
}

// ---- checkpoints ------------------------------------------------------------------

json to_json(const ParamSet& params) {
  json j = json::object();
  for (const auto& [name, t] : params.tensors) {
    j[name] = json{{"shape", t.shape()}, {"data", t.storage()}};
  }
  return j;
}

ParamSet params_from_json(const json& j) {
  ParamSet ps;
  for (const auto& [name, v] : j.items()) {
    ps.tensors.emplace(name, ad::Tensor(v.at("shape").get<ad::Shape>(), v.at("data").get<std::vector<double>>()));
  }
  return ps;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  json j{{"format", "wgnn-checkpoint/1"},
         {"config", to_json(ckpt.config)},
         {"dims", {{"n_antennas", ckpt.dims.n_antennas}, {"k_users", ckpt.dims.k_users},
                   {"node_dim", ckpt.dims.node_dim}, {"edge_dim", ckpt.dims.edge_dim}}},
         {"params", to_json(ckpt.params)},
         {"metadata", ckpt.metadata}};
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_checkpoint: cannot open " + path.string());
  os << j.dump() << '\n';
  if (!os) throw std::runtime_error("write_checkpoint: write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_checkpoint: cannot open " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  try {
    Checkpoint c;
    c.config = model_config_from_json(j.at("config"));
    const json& d = j.at("dims");
    c.dims = FeatureDims{d.at("n_antennas").get<int>(), d.at("k_users").get<int>(),
                         d.at("node_dim").get<int>(), d.at("edge_dim").get<int>()};
    c.params = params_from_json(j.at("params"));
    if (j.contains("metadata")) c.metadata = j.at("metadata");
    return c;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": malformed checkpoint: " + e.what());
  }
}

}  // namespace wgnn
