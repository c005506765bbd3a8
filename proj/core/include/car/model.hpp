#pragma once
#include <random>
#include <string>
#include <vector>

#include "car/attention.hpp"
#include "car/graph.hpp"
#include "car/tensor.hpp"

namespace car {

enum class Task { NodeClassification, GraphBinary, GraphRegression };

std::string task_name(Task t);
Task task_from_string(const std::string& s);

struct ModelConfig {
  Mechanism mechanism = Mechanism::GAT;
  std::size_t layers = 1;  // attention layers, stacked at width `hidden`
  std::size_t heads = 1;
  std::size_t hidden = 25;
  std::size_t in_dim = 0;
  std::size_t num_classes = 2;
  Task task = Task::NodeClassification;
  // Graph tasks with categorical node ids use a trainable embedding table
  // of width `hidden` instead of dense input features (in_dim == hidden then).
  std::size_t embedding_categories = 0;
};

// Input MLP, stacked attention layers, then a head over [h || h'].
struct Model {
  ModelConfig cfg;
  Tensor embedding;  // (categories, hidden), only when embedding_categories > 0
  Tensor W1, b1;     // (hidden, in_dim), (hidden)
  std::vector<AttentionLayer> layers;
  Tensor W2, b2;     // node: (C, 2*hidden), (C); graph: (1, 2*hidden), (1)

  std::vector<Tensor> parameters() const;
};

Model make_model(const ModelConfig& cfg, std::uint64_t seed);
Model clone_model(const Model& m);  // deep copy of parameter values

struct ForwardResult {
  Tensor probs;                  // node task: (N,C) rows sum to 1
  Tensor raw;                    // graph task: scalar output (prob or value)
  std::vector<Tensor> alphas;    // per layer, over active edges, mean of heads
  ActiveEdges active;
  Tensor trunk;                  // (N, hidden) input-MLP output
  std::vector<Tensor> layer_inputs;             // h fed to each layer
  std::vector<std::vector<Tensor>> projections;  // [layer][head] (N, hidden)

  // Position of a global edge id in the active-edge frame, or -1.
  int active_index(std::uint32_t edge_id) const;
};

ForwardResult node_forward(const Model& m, const Graph& g, const EdgeMask& mask);
ForwardResult graph_forward_single(const Model& m, const Graph& g, const EdgeMask& mask);
std::vector<ForwardResult> graph_forward(const Model& m, const std::vector<Graph>& batch);

// Prediction row for node n with one extra in-edge of n masked out, reusing
// the cached activations of `fwd` (computed under `mask`). Exact for 1- and
// 2-layer models; deeper models fall back to a full gradient-free forward.
std::vector<double> node_predict_minus_edge(const Model& m, const Graph& g, const EdgeMask& mask,
                                            const ForwardResult& fwd, std::uint32_t n,
                                            std::size_t removed_edge);

// Per-entity prediction losses (gradient-free helpers).
double per_node_cross_entropy(const std::vector<double>& row, int label);
double per_graph_binary_cross_entropy(double p, double target);
double per_graph_squared_error(double pred, double target);

// Versioned binary checkpoint; round-trips parameters bit-exactly.
void save_checkpoint(const Model& m, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace car
