#include "wgnn/graph.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace wgnn {

namespace {

void sort_edges(RadioGraph& g) {
  std::vector<std::size_t> order(g.edges.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const Edge& x = g.edges[a];
    const Edge& y = g.edges[b];
    return x.dst != y.dst ? x.dst < y.dst : x.src < y.src;
  });
  std::vector<Edge> edges(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) edges[i] = g.edges[order[i]];
  if (g.edge_features) {
    const ad::Tensor& ef = *g.edge_features;
    const std::size_t d = ef.cols();
    ad::Tensor out(ef.shape());
    for (std::size_t i = 0; i < order.size(); ++i) {
      for (std::size_t c = 0; c < d; ++c) out[i * d + c] = ef[order[i] * d + c];
    }
    g.edge_features = std::move(out);
  }
  g.edges = std::move(edges);
}

void check_perm(const std::vector<std::size_t>& p, const char* what) {
  std::vector<bool> seen(p.size(), false);
  for (std::size_t v : p) {
    if (v >= p.size() || seen[v]) {
      throw std::invalid_argument(std::string("permutation: ") + what + " is not a bijection");
    }
    seen[v] = true;
  }
}

std::vector<std::size_t> invert(const std::vector<std::size_t>& p) {
  std::vector<std::size_t> inv(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) inv[p[i]] = i;
  return inv;
}

}  // namespace

PermutationMap PermutationMap::identity(std::size_t k_users, std::size_t n_antennas) {
  PermutationMap p;
  p.user_perm.resize(k_users);
  p.antenna_perm.resize(n_antennas);
  std::iota(p.user_perm.begin(), p.user_perm.end(), 0);
  std::iota(p.antenna_perm.begin(), p.antenna_perm.end(), 0);
  return p;
}

PermutationMap PermutationMap::inverse() const {
  return PermutationMap{invert(user_perm), invert(antenna_perm)};
}

void PermutationMap::validate() const {
  check_perm(user_perm, "user_perm");
  check_perm(antenna_perm, "antenna_perm");
}

RadioGraph build_link_graph(const ChannelSample& sample, EdgeFeatureMode mode) {
  const auto K = static_cast<std::size_t>(sample.H.rows());
  const auto N = static_cast<std::size_t>(sample.H.cols());
  RadioGraph g;
  g.kind = GraphKind::link_graph;
  g.k_users = static_cast<int>(K);
  g.n_antennas = static_cast<int>(N);
  g.sample_id = sample.sample_id;
  g.node_types.assign(K, NodeType::link);

  ad::Tensor feats(ad::Shape{K, 2 * N});
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t n = 0; n < N; ++n) {
      feats.at(k, n) = sample.H(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n)).real();
      feats.at(k, N + n) = sample.H(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n)).imag();
    }
  }
  g.node_features = std::move(feats);

  for (std::size_t dst = 0; dst < K; ++dst) {
    for (std::size_t src = 0; src < K; ++src) {
      if (src != dst) g.edges.push_back({src, dst});
    }
  }
  if (mode == EdgeFeatureMode::correlation && !g.edges.empty()) {
    ad::Tensor ef(ad::Shape{g.edges.size(), 1});
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
      const auto hi = sample.H.row(static_cast<Eigen::Index>(g.edges[e].src));
      const auto hj = sample.H.row(static_cast<Eigen::Index>(g.edges[e].dst));
      const double denom = hi.norm() * hj.norm();
      ef[e] = denom > 0.0 ? std::abs(hi.dot(hj)) / denom : 0.0;
    }
    g.edge_features = std::move(ef);
  }
  return g;
}

RadioGraph build_bipartite_graph(const ChannelSample& sample) {
  const auto K = static_cast<std::size_t>(sample.H.rows());
  const auto N = static_cast<std::size_t>(sample.H.cols());
  RadioGraph g;
  g.kind = GraphKind::bipartite;
  g.k_users = static_cast<int>(K);
  g.n_antennas = static_cast<int>(N);
  g.sample_id = sample.sample_id;
  g.node_types.assign(N, NodeType::antenna);
  g.node_types.insert(g.node_types.end(), K, NodeType::user);

  std::vector<double> ef;
  for (std::size_t m = 0; m < N; ++m) {
    for (std::size_t k = 0; k < K; ++k) {
      const auto h = sample.H(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
      g.edges.push_back({m, N + k});
      ef.push_back(h.real());
      ef.push_back(h.imag());
      g.edges.push_back({N + k, m});
      ef.push_back(h.real());
      ef.push_back(h.imag());
    }
  }
  g.edge_features = ad::Tensor(ad::Shape{g.edges.size(), 2}, std::move(ef));
  sort_edges(g);
  return g;
}

RadioGraph build_graph(const ChannelSample& sample, GraphKind kind, EdgeFeatureMode mode) {
  return kind == GraphKind::link_graph ? build_link_graph(sample, mode) : build_bipartite_graph(sample);
}

ChannelSample channel_of(const RadioGraph& graph) {
  const auto K = static_cast<std::size_t>(graph.k_users);
  const auto N = static_cast<std::size_t>(graph.n_antennas);
  ChannelSample s{graph.sample_id, CMatrix(graph.k_users, graph.n_antennas)};
  if (graph.kind == GraphKind::link_graph) {
    const ad::Tensor& f = graph.node_features.value();
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t n = 0; n < N; ++n) {
        s.H(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n)) = {f.at(k, n), f.at(k, N + n)};
      }
    }
    return s;
  }
  const ad::Tensor& ef = graph.edge_features.value();
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const Edge& edge = graph.edges[e];
    if (edge.src >= N) continue;  // antenna -> user edges only
    s.H(static_cast<Eigen::Index>(edge.dst - N), static_cast<Eigen::Index>(edge.src)) = {ef.at(e, 0), ef.at(e, 1)};
  }
  return s;
}

ChannelSample apply_permutation(const ChannelSample& sample, const PermutationMap& perm) {
  perm.validate();
  if (perm.user_perm.size() != static_cast<std::size_t>(sample.H.rows()) ||
      perm.antenna_perm.size() != static_cast<std::size_t>(sample.H.cols())) {
    throw std::invalid_argument("apply_permutation: permutation size does not match sample");
  }
  ChannelSample out{sample.sample_id, CMatrix(sample.H.rows(), sample.H.cols())};
  for (Eigen::Index k = 0; k < sample.H.rows(); ++k) {
    for (Eigen::Index n = 0; n < sample.H.cols(); ++n) {
      out.H(k, n) = sample.H(static_cast<Eigen::Index>(perm.user_perm[static_cast<std::size_t>(k)]),
                             static_cast<Eigen::Index>(perm.antenna_perm[static_cast<std::size_t>(n)]));
    }
  }
  return out;
}

RadioGraph apply_permutation(const RadioGraph& graph, const PermutationMap& perm) {
  perm.validate();
  const auto K = static_cast<std::size_t>(graph.k_users);
  const auto N = static_cast<std::size_t>(graph.n_antennas);
  if (perm.user_perm.size() != K ||
      (graph.kind == GraphKind::bipartite && perm.antenna_perm.size() != N)) {
    throw std::invalid_argument("apply_permutation: permutation size does not match graph");
  }
  // new node i holds old node node_perm[i]
  std::vector<std::size_t> node_perm;
  if (graph.kind == GraphKind::link_graph) {
    node_perm = perm.user_perm;
  } else {
    node_perm = perm.antenna_perm;
    for (std::size_t k : perm.user_perm) node_perm.push_back(N + k);
  }
  const std::vector<std::size_t> old_to_new = invert(node_perm);

  RadioGraph out = graph;
  for (std::size_t i = 0; i < node_perm.size(); ++i) out.node_types[i] = graph.node_types[node_perm[i]];
  if (graph.node_features) {
    const ad::Tensor& f = *graph.node_features;
    const std::size_t d = f.cols();
    ad::Tensor nf(f.shape());
    for (std::size_t i = 0; i < node_perm.size(); ++i) {
      std::copy_n(f.data().begin() + node_perm[i] * d, d, nf.data().begin() + i * d);
    }
    // link-graph features are [Re h; Im h]; an antenna relabelling permutes both halves
    if (graph.kind == GraphKind::link_graph && perm.antenna_perm.size() == N && d == 2 * N) {
      ad::Tensor cols(nf.shape());
      for (std::size_t i = 0; i < node_perm.size(); ++i) {
        for (std::size_t n = 0; n < N; ++n) {
          cols.at(i, n) = nf.at(i, perm.antenna_perm[n]);
          cols.at(i, N + n) = nf.at(i, N + perm.antenna_perm[n]);
        }
      }
      nf = std::move(cols);
    }
    out.node_features = std::move(nf);
  }
  for (Edge& e : out.edges) e = Edge{old_to_new[e.src], old_to_new[e.dst]};
  sort_edges(out);
  return out;
}

CMatrix apply_permutation(const CMatrix& beams, const PermutationMap& perm) {
  perm.validate();
  if (perm.user_perm.size() != static_cast<std::size_t>(beams.cols()) ||
      perm.antenna_perm.size() != static_cast<std::size_t>(beams.rows())) {
    throw std::invalid_argument("apply_permutation: permutation size does not match beam matrix");
  }
  CMatrix out(beams.rows(), beams.cols());
  for (Eigen::Index m = 0; m < beams.rows(); ++m) {
    for (Eigen::Index k = 0; k < beams.cols(); ++k) {
      out(m, k) = beams(static_cast<Eigen::Index>(perm.antenna_perm[static_cast<std::size_t>(m)]),
                        static_cast<Eigen::Index>(perm.user_perm[static_cast<std::size_t>(k)]));
    }
  }
  return out;
}

GraphBatch make_batch(std::span<const RadioGraph> graphs) {
  if (graphs.empty()) throw std::invalid_argument("make_batch: no graphs");
  GraphBatch b;
  b.kind = graphs[0].kind;
  b.num_graphs = graphs.size();
  b.n_antennas = graphs[0].n_antennas;
  const std::size_t nd = graphs[0].node_feature_dim();
  const std::size_t ed = graphs[0].edge_feature_dim();
  std::vector<double> nf;
  std::vector<double> ef;
  std::size_t offset = 0;
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const RadioGraph& g = graphs[gi];
    if (g.kind != b.kind || g.n_antennas != b.n_antennas || g.node_feature_dim() != nd ||
        g.edge_feature_dim() != ed) {
      throw std::invalid_argument("make_batch: graph " + std::to_string(gi) +
                                  " is incompatible with the first graph in the batch");
    }
    b.node_types.insert(b.node_types.end(), g.node_types.begin(), g.node_types.end());
    b.graph_of_node.insert(b.graph_of_node.end(), g.num_nodes(), gi);
    if (g.node_features) nf.insert(nf.end(), g.node_features->data().begin(), g.node_features->data().end());
    for (const Edge& e : g.edges) {
      b.edge_src.push_back(offset + e.src);
      b.edge_dst.push_back(offset + e.dst);
    }
    if (g.edge_features) ef.insert(ef.end(), g.edge_features->data().begin(), g.edge_features->data().end());
    const std::size_t first_user = g.kind == GraphKind::link_graph ? 0 : static_cast<std::size_t>(g.n_antennas);
    for (int k = 0; k < g.k_users; ++k) {
      b.user_nodes.push_back(offset + first_user + static_cast<std::size_t>(k));
      b.graph_of_user.push_back(gi);
    }
    if (g.kind == GraphKind::bipartite) {
      for (int m = 0; m < g.n_antennas; ++m) b.antenna_nodes.push_back(offset + static_cast<std::size_t>(m));
    }
    b.users_per_graph.push_back(g.k_users);
    offset += g.num_nodes();
  }
  b.num_nodes = offset;
  if (nd > 0) b.node_features = ad::Tensor(ad::Shape{offset, nd}, std::move(nf));
  if (ed > 0 && !b.edge_src.empty()) b.edge_features = ad::Tensor(ad::Shape{b.edge_src.size(), ed}, std::move(ef));
  return b;
}

}  // namespace wgnn
