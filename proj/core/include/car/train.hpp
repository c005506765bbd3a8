#pragma once
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "car/graph.hpp"
#include "car/model.hpp"

namespace car {

enum class TrainMode { Baseline, Car, NeighborVote };

TrainMode mode_from_string(const std::string& s);
std::string mode_name(TrainMode m);

struct TrainConfig {
  Mechanism mechanism = Mechanism::GAT;
  std::size_t layers = 1;       // L
  std::size_t heads = 1;        // K
  std::size_t hidden = 25;      // F'
  double lambda = 1.0;          // causal loss weight
  std::size_t rounds = 5;       // R intervention rounds per batch
  double temperature = 0.1;     // sigmoid temperature in the causal effect
  double lr = 0.01;
  std::size_t batch_size = 10000;
  std::size_t max_epochs = 200;
  std::size_t patience = 10;    // early stopping on validation prediction loss
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::Car;
};

// One selected intervention: remove in-edge `edge` (global id) of `entity`.
struct Intervention {
  std::uint32_t entity;
  std::size_t edge;
};

// Samples one candidate in-edge per entity (uniform over its active
// in-edges), then keeps a candidate only if its removal cannot touch any
// previously kept entity's prediction and no previously kept removal can
// touch this entity's. Entities are visited in ascending id order, so
// earlier ids win conflicts. `layers` is the receptive-field depth L.
std::vector<Intervention> sample_intervention_round(const Graph& g, const EdgeMask& mask,
                                                    const std::vector<std::uint32_t>& entities,
                                                    std::size_t layers, std::mt19937_64& rng);

// c = sigmoid((loss_post / max(loss_base, 1e-9))^d - 1, temperature), where
// d is the entity's pre-intervention in-degree. The power is computed as
// expm1(d * log(rho)) and clamped to [-1e6, 1e6] before the sigmoid.
double causal_effect_from_losses(double loss_base, double loss_post, double degree,
                                 double temperature);

// Measured effect of removing `iv.edge` on the model's prediction loss for
// iv.entity, using cached activations from `fwd` (gradient-free).
double causal_effect(const Model& m, const Graph& g, const EdgeMask& mask,
                     const ForwardResult& fwd, const Intervention& iv, double temperature);

// Model-free ablation: predictions are the softmax of the entity's
// in-neighbor label histogram; the intervention decrements one count.
// An all-zero histogram predicts the uniform distribution.
double neighbor_vote_effect(const Graph& g, const EdgeMask& mask, const Intervention& iv,
                            double temperature);

// Mean binary cross-entropy between selected attention weights and their
// measured effects, averaged over non-empty rounds. `alpha` is the final
// layer's attention over active edges; positions index into that frame.
Tensor causal_loss(const Tensor& alpha, const std::vector<std::vector<std::uint32_t>>& positions,
                   const std::vector<std::vector<double>>& effects);

Tensor total_loss(const Tensor& prediction_loss, const Tensor& causal, double lambda);

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double causal = 0.0;  // mean over batches, 0 when disabled
};

struct TrainResult {
  Model model;  // parameters from the best validation epoch
  std::vector<EpochStats> history;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  double wall_seconds = 0.0;
};

// Full-batch (chunked above batch_size) Adam training with early stopping
// on validation prediction loss. Baseline mode and lambda == 0 skip the
// intervention machinery entirely. The mask overload trains on the reduced
// edge set throughout.
TrainResult train(const Graph& g, const TrainConfig& cfg);
TrainResult train(const Graph& g, const TrainConfig& cfg, const EdgeMask& mask);

struct EvalStats {
  double accuracy = 0.0;
  double loss = 0.0;
};

// Accuracy (argmax, ties to the lowest class index) and mean prediction
// loss over the masked nodes.
EvalStats evaluate(const Model& m, const Graph& g, const std::vector<std::uint8_t>& node_mask);
EvalStats evaluate(const Model& m, const Graph& g, const std::vector<std::uint8_t>& node_mask,
                   const EdgeMask& edge_mask);

}  // namespace car
