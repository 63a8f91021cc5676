#include "wgnn/model.hpp"

#include <doctest.h>

#include <filesystem>
#include <numeric>
#include <random>

using namespace wgnn;

namespace {

ChannelSample random_sample(int k, int n, std::uint64_t seed) {
  DatasetHeader h;
  h.k_users = k;
  h.n_antennas = n;
  h.seed = seed;
  return sample_channels(h).front();
}

ModelConfig small(std::string_view preset, GraphKind kind = GraphKind::link_graph) {
  ModelConfig c = ModelConfig::preset(preset);
  c.representation = kind;
  c.hidden_dim = 16;
  c.readout_hidden = 16;
  c.depth = 2;
  c.heads = 2;
  return c;
}

Checkpoint make(const ModelConfig& c, int k, int n, std::uint64_t seed) {
  const FeatureDims dims = feature_dims(c, k, n);
  return Checkpoint{c, dims, init_params(c, dims, seed), {}};
}

double mean_pairwise_distance(const ad::Tensor& x) {
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = i + 1; j < x.rows(); ++j) {
      double d = 0.0;
      for (std::size_t c = 0; c < x.cols(); ++c) d += (x.at(i, c) - x.at(j, c)) * (x.at(i, c) - x.at(j, c));
      acc += std::sqrt(d);
      ++n;
    }
  }
  return acc / static_cast<double>(n);
}

}  // namespace

TEST_CASE("presets") {
  CHECK(ModelConfig::preset("gcn").aggregation == Aggregation::mean);
  CHECK(ModelConfig::preset("gat").aggregation == Aggregation::attention);
  CHECK_FALSE(ModelConfig::preset("gat").residual);
  CHECK(ModelConfig::preset("resgat").residual);
  CHECK(ModelConfig::preset("mlp").is_mlp());
  CHECK_THROWS_AS(ModelConfig::preset("transformer"), std::invalid_argument);
  ModelConfig bad = ModelConfig::preset("gat");
  bad.hidden_dim = 10;
  bad.heads = 4;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  ModelConfig c = ModelConfig::preset("resgat");
  c.representation = GraphKind::bipartite;
  c.constraint_mode = ConstraintMode::ldm;
  CHECK(model_config_from_json(to_json(c)) == c);
}

TEST_CASE("init is deterministic and within the Glorot bound") {
  for (const char* p : {"gcn", "gat", "resgat", "mlp"}) {
    const ModelConfig c = ModelConfig::preset(p);
    const FeatureDims dims = feature_dims(c, 4, 8);
    const ParamSet a = init_params(c, dims, 3);
    CHECK(a == init_params(c, dims, 3));
    CHECK_FALSE(a == init_params(c, dims, 4));
    for (const auto& [name, t] : a.tensors) {
      if (t.rank() == 2) {
        const double bound = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
        for (double x : t.data()) CHECK(std::abs(x) <= bound);
      } else {
        for (double x : t.data()) CHECK(x == 0.0);  // biases
      }
    }
  }
  ModelConfig l = ModelConfig::preset("gcn");
  l.constraint_mode = ConstraintMode::ldm;
  const ParamSet p = init_params(l, feature_dims(l, 4, 8), 0);
  REQUIRE(p.has_lambda());
  CHECK(p.lambda() == 0.1);
  CHECK_FALSE(init_params(ModelConfig::preset("gcn"), feature_dims(l, 4, 8), 0).has_lambda());
}

TEST_CASE("parameter shapes never depend on K") {
  for (GraphKind kind : {GraphKind::link_graph, GraphKind::bipartite}) {
    for (const char* p : {"gcn", "gat", "resgat"}) {
      ModelConfig c = ModelConfig::preset(p);
      c.representation = kind;
      const std::size_t base = init_params(c, feature_dims(c, 4, 8), 0).count();
      for (int k : {1, 2, 7, 12}) CHECK(init_params(c, feature_dims(c, k, 8), 0).count() == base);
    }
  }
  const ModelConfig m = ModelConfig::preset("mlp");
  CHECK(init_params(m, feature_dims(m, 4, 8), 0).count() != init_params(m, feature_dims(m, 5, 8), 0).count());
}

TEST_CASE("isolated node: update sees a zero aggregate") {
  ModelConfig c = small("gcn");
  c.aggregation = Aggregation::sum;
  const Checkpoint ck = make(c, 1, 3, 1);
  const std::vector<RadioGraph> gs{build_link_graph(random_sample(1, 3, 2))};
  const GraphBatch g = make_batch(gs);
  ad::Tape tape;
  const ParamVars pv = bind_params(tape, ck.params, false);
  const ad::Var x = tape.constant(*g.node_features);
  const ad::Tensor out = mp_layer(c, pv, g, x, 0).value();

  const ad::Tensor& ws = ck.params.tensors.at("l0.link.w_self");
  const ad::Tensor& b = ck.params.tensors.at("l0.link.b");
  for (std::size_t j = 0; j < out.cols(); ++j) {
    double u = b[j];
    for (std::size_t i = 0; i < ws.rows(); ++i) u += x.value()[i] * ws.at(i, j);
    const double expect = u > 0 ? u : c.leaky_alpha * u;
    CHECK(out.at(0, j) == doctest::Approx(expect).epsilon(1e-14));
  }
}

TEST_CASE("identical users get identical features and identical beams") {
  for (const char* p : {"gcn", "gat", "resgat"}) {
    ChannelSample s = random_sample(3, 4, 5);
    s.H.row(2) = s.H.row(1);
    const ModelConfig c = small(p);
    const Checkpoint ck = make(c, 3, 4, 2);
    const std::vector<RadioGraph> gs{build_link_graph(s)};
    const GraphBatch g = make_batch(gs);
    ad::Tape tape;
    const ad::Tensor x = embed(c, bind_params(tape, ck.params, false), g).value();
    for (std::size_t j = 0; j < x.cols(); ++j) CHECK(x.at(1, j) == x.at(2, j));
    const BeamMatrix W = model_forward(c, ck.params, gs[0], 10.0);
    CHECK(W.W.col(1) == W.W.col(2));
  }
}

TEST_CASE("attention: equal scores give uniform weights; one neighbour gives weight 1") {
  ModelConfig c = small("gat");
  const Checkpoint ck = make(c, 3, 4, 7);
  const std::string prefix = "l0.link.";
  const ad::Tensor& U = ck.params.tensors.at(prefix + "w_proj");

  auto projected = [&](const ad::Tensor& x, std::size_t row) {
    std::vector<double> z(U.cols(), 0.0);
    for (std::size_t j = 0; j < U.cols(); ++j)
      for (std::size_t i = 0; i < U.rows(); ++i) z[j] += x.at(row, i) * U.at(i, j);
    return z;
  };

  SUBCASE("identical neighbours") {
    ChannelSample s = random_sample(3, 4, 9);
    s.H.row(2) = s.H.row(1);
    const std::vector<RadioGraph> gs{build_link_graph(s)};
    const GraphBatch g = make_batch(gs);
    ad::Tape tape;
    const ParamVars pv = bind_params(tape, ck.params, false);
    const ad::Var x = tape.constant(*g.node_features);
    std::vector<std::size_t> all(g.edge_src.size());
    std::iota(all.begin(), all.end(), 0);
    const ad::Tensor agg = attention_aggregate(c, pv, g, x, prefix, all).value();
    // node 0 hears nodes 1 and 2, which are identical: agg_0 = U x_1
    const auto z1 = projected(x.value(), 1);
    for (std::size_t j = 0; j < z1.size(); ++j) CHECK(agg.at(0, j) == doctest::Approx(z1[j]).epsilon(1e-13));
  }
  SUBCASE("single neighbour") {
    const std::vector<RadioGraph> gs{build_link_graph(random_sample(2, 4, 10))};
    const GraphBatch g = make_batch(gs);
    ad::Tape tape;
    const ParamVars pv = bind_params(tape, ck.params, false);
    const ad::Var x = tape.constant(*g.node_features);
    const std::vector<std::size_t> all{0, 1};
    const ad::Tensor agg = attention_aggregate(c, pv, g, x, prefix, all).value();
    const auto z0 = projected(x.value(), 0);
    const auto z1 = projected(x.value(), 1);
    for (std::size_t j = 0; j < z0.size(); ++j) {
      CHECK(agg.at(0, j) == doctest::Approx(z1[j]).epsilon(1e-13));
      CHECK(agg.at(1, j) == doctest::Approx(z0[j]).epsilon(1e-13));
    }
  }
}

TEST_CASE("link-graph model is user-permutation equivariant") {
  std::mt19937_64 rng(31);
  for (const char* p : {"gcn", "gat", "resgat"}) {
    const ModelConfig c = small(p);
    const Checkpoint ck = make(c, 4, 8, 11);
    double worst = 0.0;
    for (int t = 0; t < 30; ++t) {
      const ChannelSample s = random_sample(4, 8, 200 + static_cast<std::uint64_t>(t));
      PermutationMap pm = PermutationMap::identity(4, 8);
      std::shuffle(pm.user_perm.begin(), pm.user_perm.end(), rng);
      const CMatrix a = model_forward(c, ck.params, build_link_graph(apply_permutation(s, pm)), 10.0).W;
      const CMatrix b = apply_permutation(model_forward(c, ck.params, build_link_graph(s), 10.0).W, pm);
      worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("bipartite model is antenna- and user-permutation equivariant") {
  std::mt19937_64 rng(37);
  for (const char* p : {"gcn", "gat", "resgat"}) {
    const ModelConfig c = small(p, GraphKind::bipartite);
    const Checkpoint ck = make(c, 4, 6, 12);
    double worst = 0.0;
    for (int t = 0; t < 30; ++t) {
      const ChannelSample s = random_sample(4, 6, 300 + static_cast<std::uint64_t>(t));
      PermutationMap pm = PermutationMap::identity(4, 6);
      std::shuffle(pm.user_perm.begin(), pm.user_perm.end(), rng);
      std::shuffle(pm.antenna_perm.begin(), pm.antenna_perm.end(), rng);
      const CMatrix a = model_forward(c, ck.params, build_bipartite_graph(apply_permutation(s, pm)), 10.0).W;
      const CMatrix b = apply_permutation(model_forward(c, ck.params, build_bipartite_graph(s), 10.0).W, pm);
      worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("one parameter set serves every K") {
  for (GraphKind kind : {GraphKind::link_graph, GraphKind::bipartite}) {
    const ModelConfig c = small("resgat", kind);
    const Checkpoint ck = make(c, 4, 8, 13);
    for (int k = 2; k <= 12; ++k) {
      const ChannelSample s = random_sample(k, 8, static_cast<std::uint64_t>(k));
      const BeamMatrix W = model_forward(c, ck.params, build_graph(s, kind), 10.0);
      CHECK(W.W.rows() == 8);
      CHECK(W.W.cols() == k);
      CHECK(W.W.allFinite());
      CHECK(W.feasible);
    }
  }
}

TEST_CASE("af outputs stay on or inside the power ball") {
  for (GraphKind kind : {GraphKind::link_graph, GraphKind::bipartite}) {
    for (const char* p : {"gcn", "gat", "resgat"}) {
      const ModelConfig c = small(p, kind);
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Checkpoint ck = make(c, 4, 8, seed);
        for (double P : {0.01, 1.0, 10.0, 1000.0}) {
          const BeamMatrix W = model_forward(c, ck.params, build_graph(random_sample(4, 8, seed), kind), P);
          CHECK(W.power() <= P * (1.0 + 1e-12));
          CHECK(W.feasible);
        }
      }
    }
  }
}

TEST_CASE("pm and ldm skip the projection") {
  ModelConfig c = small("gcn");
  c.constraint_mode = ConstraintMode::pm;
  const Checkpoint ck = make(c, 4, 8, 1);
  const BeamMatrix W = model_forward(c, ck.params, build_link_graph(random_sample(4, 8, 1)), 1e-6);
  CHECK(W.raw_power == doctest::Approx(W.power()));
  CHECK_FALSE(W.feasible);
}

TEST_CASE("forward is deterministic and checks the representation") {
  const ModelConfig c = small("resgat");
  const Checkpoint ck = make(c, 4, 8, 1);
  const RadioGraph g = build_link_graph(random_sample(4, 8, 1));
  CHECK(model_forward(c, ck.params, g, 10.0).W == model_forward(c, ck.params, g, 10.0).W);
  CHECK_THROWS_AS(model_forward(c, ck.params, build_bipartite_graph(random_sample(4, 8, 1)), 10.0),
                  std::invalid_argument);
}

TEST_CASE("batched and single-sample forward agree") {
  for (GraphKind kind : {GraphKind::link_graph, GraphKind::bipartite}) {
    const ModelConfig c = small("resgat", kind);
    const Checkpoint ck = make(c, 3, 5, 4);
    std::vector<ChannelSample> ss;
    for (int i = 0; i < 5; ++i) ss.push_back(random_sample(3, 5, 40 + static_cast<std::uint64_t>(i)));
    const ModelBatch mb = make_model_batch(c, ss);
    ad::Tape tape;
    const ForwardOutput out = forward(c, bind_params(tape, ck.params, false), mb, 10.0);
    for (std::size_t i = 0; i < ss.size(); ++i) {
      const CMatrix batched = beams_of_sample(mb.channels, out.beams.re.value(), out.beams.im.value(), i);
      const CMatrix single = model_forward(c, ck.params, build_graph(ss[i], kind), 10.0).W;
      CHECK((batched - single).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("mlp comparator is tied to its training dimensions") {
  const ModelConfig c = ModelConfig::preset("mlp");
  const Checkpoint ck = make(c, 4, 8, 1);
  const BeamMatrix W = mlp_baseline_forward(ck.params, c, random_sample(4, 8, 1), 10.0);
  CHECK(W.W.rows() == 8);
  CHECK(W.W.cols() == 4);
  CHECK(W.power() <= 10.0 * (1.0 + 1e-12));
  CHECK_THROWS_AS(mlp_baseline_forward(ck.params, c, random_sample(5, 8, 1), 10.0), std::invalid_argument);
  CHECK_THROWS_AS(mlp_baseline_forward(ck.params, c, random_sample(4, 7, 1), 10.0), std::invalid_argument);
}

TEST_CASE("checkpoint round-trip is lossless") {
  ModelConfig c = small("resgat", GraphKind::bipartite);
  c.constraint_mode = ConstraintMode::ldm;
  Checkpoint ck = make(c, 4, 8, 21);
  ck.params.set_lambda(0.3172);
  ck.metadata = {{"utility", "srm"}, {"seed", 21}, {"epochs", 3}};
  const auto path = std::filesystem::temp_directory_path() / "wgnn_test_model_ckpt.json";
  write_checkpoint(path, ck);
  const Checkpoint r = read_checkpoint(path);
  CHECK(r.config == ck.config);
  CHECK(r.params == ck.params);
  CHECK(r.metadata == ck.metadata);
  CHECK(r.dims.n_antennas == 8);
  const RadioGraph g = build_bipartite_graph(random_sample(4, 8, 3));
  CHECK(model_forward(r.config, r.params, g, 10.0).W == model_forward(c, ck.params, g, 10.0).W);
  std::filesystem::remove(path);
}

TEST_CASE("over-smoothing: deep plain mean-aggregation stacks collapse node features") {
  int shrunk = 0;
  const std::vector<RadioGraph> gs{build_link_graph(random_sample(6, 8, 77))};
  const GraphBatch g = make_batch(gs);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    ModelConfig c = small("gcn");
    c.residual = false;
    c.depth = 2;
    const ParamSet p2 = init_params(c, feature_dims(c, 6, 8), seed);
    c.depth = 16;
    const ParamSet p16 = init_params(c, feature_dims(c, 6, 8), seed);
    ad::Tape tape;
    ModelConfig c2 = c;
    c2.depth = 2;
    const double d2 = mean_pairwise_distance(embed(c2, bind_params(tape, p2, false), g).value());
    const double d16 = mean_pairwise_distance(embed(c, bind_params(tape, p16, false), g).value());
    shrunk += d16 < d2 ? 1 : 0;
  }
  CHECK(shrunk >= 90);
}

TEST_CASE("full-chain gradients match finite differences") {
  std::mt19937_64 rng(41);
  int configs = 0;
  for (GraphKind kind : {GraphKind::link_graph, GraphKind::bipartite}) {
    for (const char* p : {"gcn", "gat", "resgat", "mlp"}) {
      if (kind == GraphKind::bipartite && std::string_view(p) == "mlp") continue;
      for (ConstraintMode mode : {ConstraintMode::af, ConstraintMode::pm, ConstraintMode::ldm}) {
        ModelConfig c = small(p, kind);
        c.hidden_dim = 8;
        c.readout_hidden = 8;
        c.constraint_mode = mode;
        if (kind == GraphKind::link_graph && configs % 2 == 0) c.edge_features = EdgeFeatureMode::correlation;
        const Checkpoint ck = make(c, 3, 4, static_cast<std::uint64_t>(configs));
        std::vector<ChannelSample> ss{random_sample(3, 4, rng()), random_sample(3, 4, rng())};
        const ModelBatch mb = make_model_batch(c, ss);
        const UtilitySpec spec{static_cast<UtilityKind>(configs % 3), 1.0, 10.0, 1.0};

        std::vector<std::string> names;
        std::vector<ad::Tensor> point;
        for (const auto& [n, t] : ck.params.tensors) {
          if (n == kLambdaName) continue;
          names.push_back(n);
          point.push_back(t);
        }
        auto f = [&](ad::Tape& tape, std::span<const ad::Var> v) {
          ParamVars pv;
          for (std::size_t i = 0; i < names.size(); ++i) pv.emplace(names[i], v[i]);
          const ForwardOutput out = forward(c, pv, mb, spec.power_budget);
          ad::Var u = sample_utility(tape, mb.channels, out.beams, spec);
          ad::Var loss = mode == ConstraintMode::af   ? loss_unsupervised(u)
                         : mode == ConstraintMode::pm ? loss_penalty(u, out.raw_power, spec.power_budget, 10.0)
                                                      : loss_lagrangian(u, out.raw_power, spec.power_budget, 0.1);
          return ad::mean(loss);
        };
        ad::GradCheckOptions opts;
        opts.max_coords = 60;
        opts.seed = static_cast<std::uint64_t>(configs);
        CHECK(ad::grad_check(f, point, opts) < 1e-4);
        ++configs;
      }
    }
  }
  CHECK(configs == 21);
}
