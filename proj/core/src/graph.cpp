#include "car/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>

namespace car {

EdgeMask full_mask(const Graph& g) { return EdgeMask(g.num_edges(), 1); }

std::size_t active_in_degree(const Graph& g, const EdgeMask& mask, std::uint32_t j) {
  std::size_t d = 0;
  for (std::size_t e = g.in_offsets[j]; e < g.in_offsets[j + 1]; ++e) d += mask[e] ? 1 : 0;
  return d;
}

Graph build_graph(std::size_t num_nodes,
                  const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges,
                  bool directed, std::size_t* dropped_self_loops) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;  // (tgt, src)
  pairs.reserve(edges.size() * (directed ? 1 : 2));
  std::size_t dropped = 0;
  for (std::size_t k = 0; k < edges.size(); ++k) {
    auto [s, t] = edges[k];
    if (s >= num_nodes || t >= num_nodes)
      throw DataError("build_graph: edge " + std::to_string(k) + " references node " +
                      std::to_string(std::max(s, t)) + " but graph has " +
                      std::to_string(num_nodes) + " nodes");
    if (s == t) {
      ++dropped;
      continue;
    }
    pairs.emplace_back(t, s);
    if (!directed) pairs.emplace_back(s, t);
  }
  if (dropped_self_loops) *dropped_self_loops = dropped;
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  Graph g;
  g.num_nodes = num_nodes;
  g.in_offsets.assign(num_nodes + 1, 0);
  g.src.reserve(pairs.size());
  g.tgt.reserve(pairs.size());
  for (auto& [t, s] : pairs) {
    g.in_offsets[t + 1]++;
    g.src.push_back(s);
    g.tgt.push_back(t);
  }
  for (std::size_t i = 0; i < num_nodes; ++i) g.in_offsets[i + 1] += g.in_offsets[i];
  g.labels.assign(num_nodes, 0);
  return g;
}

namespace {

std::vector<std::uint32_t> lhop_impl(const Graph& g, const EdgeMask* mask, std::uint32_t j,
                                     std::size_t hops) {
  std::vector<std::uint8_t> visited(g.num_nodes, 0);
  visited[j] = 1;
  std::vector<std::uint32_t> out;
  std::deque<std::uint32_t> frontier{j};
  for (std::size_t depth = 0; depth < hops && !frontier.empty(); ++depth) {
    std::deque<std::uint32_t> next;
    for (std::uint32_t v : frontier) {
      for (std::size_t e = g.in_offsets[v]; e < g.in_offsets[v + 1]; ++e) {
        if (mask && !(*mask)[e]) continue;
        std::uint32_t s = g.src[e];
        if (!visited[s]) {
          visited[s] = 1;
          out.push_back(s);
          next.push_back(s);
        }
      }
    }
    frontier.swap(next);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<std::uint32_t> l_hop_in_neighborhood(const Graph& g, std::uint32_t j, std::size_t hops) {
  return lhop_impl(g, nullptr, j, hops);
}

std::vector<std::uint32_t> l_hop_in_neighborhood(const Graph& g, const EdgeMask& mask,
                                                 std::uint32_t j, std::size_t hops) {
  return lhop_impl(g, &mask, j, hops);
}

double edge_homophily(const Graph& g, const EdgeMask& mask) {
  std::size_t active = 0, same = 0;
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    if (!mask[e]) continue;
    ++active;
    if (g.labels[g.src[e]] == g.labels[g.tgt[e]]) ++same;
  }
  if (active == 0) throw DataError("edge_homophily: graph has no active edges");
  return static_cast<double>(same) / static_cast<double>(active);
}

double edge_homophily(const Graph& g) { return edge_homophily(g, full_mask(g)); }

Graph generate_synthetic(const SynthConfig& cfg) {
  if (cfg.num_classes < 2)
    throw DataError("generate_synthetic: need at least 2 classes");
  if (cfg.feature_dim < cfg.num_classes)
    throw DataError("generate_synthetic: feature_dim " + std::to_string(cfg.feature_dim) +
                    " is smaller than num_classes " + std::to_string(cfg.num_classes));
  if (cfg.target_homophily < 0.0 || cfg.target_homophily > 1.0)
    throw DataError("generate_synthetic: target homophily must lie in [0,1]");
  std::mt19937_64 rng(cfg.seed);

  std::vector<int> labels(cfg.n);
  std::uniform_int_distribution<int> cls(0, static_cast<int>(cfg.num_classes) - 1);
  for (std::size_t i = 0; i < cfg.n; ++i) labels[i] = cls(rng);

  std::vector<std::vector<std::uint32_t>> by_class(cfg.num_classes);
  for (std::size_t i = 0; i < cfg.n; ++i)
    by_class[labels[i]].push_back(static_cast<std::uint32_t>(i));

  const std::size_t k = static_cast<std::size_t>(std::ceil(cfg.mean_degree));
  std::bernoulli_distribution intra(cfg.target_homophily);
  std::uniform_int_distribution<std::uint32_t> any_node(0, static_cast<std::uint32_t>(cfg.n) - 1);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  edges.reserve(cfg.n * k);
  for (std::uint32_t j = 0; j < cfg.n; ++j) {
    const int c = labels[j];
    const auto& pool = by_class[c];
    const bool has_intra = pool.size() > 1;
    const bool has_inter = pool.size() < cfg.n;
    for (std::size_t t = 0; t < k; ++t) {
      bool want_intra = intra(rng);
      if (want_intra && !has_intra) continue;
      if (!want_intra && !has_inter) continue;
      std::uint32_t s;
      if (want_intra) {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        do {
          s = pool[pick(rng)];
        } while (s == j);
      } else {
        do {
          s = any_node(rng);
        } while (labels[s] == c);
      }
      edges.emplace_back(s, j);
    }
  }

  Graph g = build_graph(cfg.n, edges, /*directed=*/true);
  g.labels = labels;
  g.num_classes = cfg.num_classes;
  g.feature_dim = cfg.feature_dim;
  g.features.resize(cfg.n * cfg.feature_dim);
  std::normal_distribution<double> noise(0.0, 0.5);
  for (std::size_t i = 0; i < cfg.n; ++i)
    for (std::size_t d = 0; d < cfg.feature_dim; ++d)
      g.features[i * cfg.feature_dim + d] =
          (d == static_cast<std::size_t>(labels[i]) ? 1.0 : 0.0) + noise(rng);

  g.train_mask.assign(cfg.n, 0);
  g.val_mask.assign(cfg.n, 0);
  g.test_mask.assign(cfg.n, 0);
  std::vector<std::size_t> taken(cfg.num_classes, 0);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    if (taken[labels[i]] < cfg.train_per_class) {
      g.train_mask[i] = 1;
      ++taken[labels[i]];
    }
  }
  std::size_t val = 0;
  for (std::size_t i = 0; i < cfg.n && val < cfg.val_count; ++i) {
    if (!g.train_mask[i]) {
      g.val_mask[i] = 1;
      ++val;
    }
  }
  for (std::size_t i = 0; i < cfg.n; ++i)
    if (!g.train_mask[i] && !g.val_mask[i]) g.test_mask[i] = 1;
  return g;
}

}  // namespace car
