#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "car/graph.hpp"
#include "car/model.hpp"
#include "car/train.hpp"

namespace car {

// Final-layer mean attention per global edge, from one full-graph pass.
std::vector<double> edge_alphas(const Model& m, const Graph& g);

// Keep edges whose attention clears the threshold (alpha >= alpha_T).
EdgeMask prune_by_threshold(const std::vector<double>& alpha, std::size_t num_edges,
                            double alpha_T);

struct RewiringPoint {
  double threshold = 0.0;
  std::string source;  // "baseline" or "car"
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  std::size_t kept_edges = 0;
};

struct RewiringResult {
  std::vector<RewiringPoint> points;
  std::vector<std::pair<std::uint64_t, double>> unpruned;  // seed -> accuracy
  double auc_baseline = 0.0;  // signed trapezoid area of accuracy minus the
  double auc_car = 0.0;       // unpruned accuracy, over the threshold axis
};

struct RewiringConfig {
  std::vector<double> thresholds;       // ascending
  std::vector<std::uint64_t> seeds;
  std::size_t gcn_hidden = 100;
  std::size_t gcn_layers = 2;
  double lr = 0.01;
  std::size_t max_epochs = 200;
  std::size_t patience = 10;
};

// Prunes by attention from each source model, retrains a plain GCN on the
// pruned graph per threshold and seed, and reports test accuracies plus the
// area between the pruned and unpruned accuracy curves.
RewiringResult rewired_gcn_experiment(const Graph& g, const Model& baseline, const Model& car_model,
                                      const RewiringConfig& cfg);

}  // namespace car
