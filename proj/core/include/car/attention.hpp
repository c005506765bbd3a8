#pragma once
#include <random>
#include <string>
#include <vector>

#include "car/graph.hpp"
#include "car/tensor.hpp"

namespace car {

enum class Mechanism { GAT, GATv2, GraphTransformer, GCN };

Mechanism mechanism_from_string(const std::string& s);
std::string mechanism_name(Mechanism m);

// Scoring nonlinearity slope; the trunk/head MLP uses 0.01 instead.
constexpr double kScoreSlope = 0.2;
constexpr double kMlpSlope = 0.01;

// One multi-head layer. W[k] is (f_out, f_in); a[k] is (2*f_out) and only
// present for GAT/GATv2. GCN is single-head and has no attention vector.
struct AttentionLayer {
  Mechanism mechanism = Mechanism::GAT;
  std::size_t heads = 1;
  std::size_t f_in = 0, f_out = 0;
  std::vector<Tensor> W;
  std::vector<Tensor> a;

  std::vector<Tensor> parameters() const;
};

AttentionLayer make_attention_layer(Mechanism mech, std::size_t heads, std::size_t f_in,
                                    std::size_t f_out, std::mt19937_64& rng);

// The surviving edges of a mask, in global edge order.
struct ActiveEdges {
  std::vector<std::uint32_t> edge_ids;
  std::vector<std::uint32_t> src, tgt;
};

ActiveEdges collect_active(const Graph& g, const EdgeMask& mask);

struct LayerResult {
  Tensor h;                       // (N, f_out): mean over heads
  Tensor alpha;                   // per active edge, mean over heads; undefined for GCN
  std::vector<Tensor> head_proj;  // per head: (N, f_out) projected inputs
};

// Attention weights are normalized per target node over its active in-edges
// (softmax); aggregation is the alpha-weighted sum of projected sources.
// Nodes with no active in-edge get a zero row. GCN instead applies the
// symmetrically normalized sum with an implicit self-loop.
LayerResult layer_forward(const AttentionLayer& layer, const Graph& g, const ActiveEdges& active,
                          const Tensor& h);

// Raw pre-softmax scores for one head over the active edges.
Tensor score_edges(const AttentionLayer& layer, std::size_t head, const Tensor& proj,
                   const ActiveEdges& active);

}  // namespace car
