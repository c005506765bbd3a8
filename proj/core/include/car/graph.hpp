#pragma once
#include <cstdint>
#include <random>
#include <vector>

#include "car/error.hpp"

namespace car {

// Immutable directed graph in compressed in-edge form: for each target node,
// a contiguous run of source ids. Edge e is the e-th entry of that layout,
// so (src[e], tgt of the run containing e) is the global edge identity.
// Self-loops are rejected at build; undirected input is stored as two
// directed edges; duplicate directed edges collapse to one.
struct Graph {
  std::size_t num_nodes = 0;
  std::vector<std::size_t> in_offsets;  // num_nodes+1
  std::vector<std::uint32_t> src;       // per edge, grouped by target
  std::vector<std::uint32_t> tgt;       // per edge (redundant with offsets)

  std::size_t feature_dim = 0;
  std::vector<double> features;  // num_nodes x feature_dim, row major
  std::vector<int> labels;       // per node
  std::size_t num_classes = 0;

  std::vector<std::uint8_t> train_mask, val_mask, test_mask;  // per node

  std::size_t num_edges() const { return src.size(); }
  std::size_t in_degree(std::uint32_t j) const { return in_offsets[j + 1] - in_offsets[j]; }
  double mean_in_degree() const {
    return num_nodes ? static_cast<double>(src.size()) / static_cast<double>(num_nodes) : 0.0;
  }
};

// Per-edge keep flag; masked-out edges behave as deleted.
using EdgeMask = std::vector<std::uint8_t>;

EdgeMask full_mask(const Graph& g);
std::size_t active_in_degree(const Graph& g, const EdgeMask& mask, std::uint32_t j);

// edges are (source, target) pairs over ids in [0, num_nodes).
// directed=false doubles each pair. Self-loops are dropped with a count
// reported via dropped_self_loops (pass nullptr to ignore).
Graph build_graph(std::size_t num_nodes, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges,
                  bool directed, std::size_t* dropped_self_loops = nullptr);

// Nodes reachable by walking at most `hops` in-edges backwards from j,
// excluding j itself. Sorted ascending.
std::vector<std::uint32_t> l_hop_in_neighborhood(const Graph& g, std::uint32_t j, std::size_t hops);
std::vector<std::uint32_t> l_hop_in_neighborhood(const Graph& g, const EdgeMask& mask,
                                                 std::uint32_t j, std::size_t hops);

// Fraction of active edges whose endpoints share a label. Errors on a
// graph with no active edges.
double edge_homophily(const Graph& g, const EdgeMask& mask);
double edge_homophily(const Graph& g);

struct SynthConfig {
  std::size_t n = 1000;
  std::size_t num_classes = 5;
  double target_homophily = 0.5;
  double mean_degree = 4.0;
  std::size_t feature_dim = 10;   // >= num_classes; one-hot(label) + noise
  std::uint64_t seed = 0;
  std::size_t train_per_class = 20;
  std::size_t val_count = 500;
};

// Labels uniform over classes; each node draws ceil(mean_degree) in-edge
// sources, intra-class with probability target_homophily; features are
// one-hot(label) plus N(0, 0.5^2) noise in every dimension. Splits are
// train_per_class per class, then val_count validation, remainder test.
Graph generate_synthetic(const SynthConfig& cfg);

}  // namespace car
