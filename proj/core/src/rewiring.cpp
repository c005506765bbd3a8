#include "car/rewiring.hpp"

#include <algorithm>
#include <map>

namespace car {

std::vector<double> edge_alphas(const Model& m, const Graph& g) {
  NoGrad ng;
  ForwardResult fwd = node_forward(m, g, full_mask(g));
  if (fwd.alphas.empty()) throw DataError("edge_alphas: model has no attention");
  return fwd.alphas.back().values();
}

EdgeMask prune_by_threshold(const std::vector<double>& alpha, std::size_t num_edges,
                            double alpha_T) {
  if (alpha.size() != num_edges)
    throw DataError("prune_by_threshold: " + std::to_string(alpha.size()) +
                    " attention values for " + std::to_string(num_edges) + " edges");
  EdgeMask mask(num_edges, 0);
  for (std::size_t e = 0; e < num_edges; ++e) mask[e] = alpha[e] >= alpha_T ? 1 : 0;
  return mask;
}

RewiringResult rewired_gcn_experiment(const Graph& g, const Model& baseline, const Model& car_model,
                                      const RewiringConfig& cfg) {
  if (cfg.thresholds.empty()) throw DataError("rewiring: no thresholds");
  if (cfg.seeds.empty()) throw DataError("rewiring: no seeds");
  std::vector<double> thresholds(cfg.thresholds);
  std::sort(thresholds.begin(), thresholds.end());

  auto gcn_cfg = [&](std::uint64_t seed) {
    TrainConfig tc;
    tc.mechanism = Mechanism::GCN;
    tc.layers = cfg.gcn_layers;
    tc.heads = 1;
    tc.hidden = cfg.gcn_hidden;
    tc.lambda = 0.0;
    tc.mode = TrainMode::Baseline;
    tc.lr = cfg.lr;
    tc.max_epochs = cfg.max_epochs;
    tc.patience = cfg.patience;
    tc.seed = seed;
    return tc;
  };

  RewiringResult result;
  std::map<std::uint64_t, double> unpruned;
  for (std::uint64_t seed : cfg.seeds) {
    TrainResult tr = train(g, gcn_cfg(seed));
    unpruned[seed] = evaluate(tr.model, g, g.test_mask).accuracy;
    result.unpruned.emplace_back(seed, unpruned[seed]);
  }

  struct Curve {
    std::vector<double> mean_diff;  // per threshold, averaged over seeds
  };
  std::map<std::string, Curve> curves;
  for (const std::string& source : {std::string("baseline"), std::string("car")}) {
    const Model& src_model = source == "baseline" ? baseline : car_model;
    std::vector<double> alpha = edge_alphas(src_model, g);
    Curve curve;
    curve.mean_diff.assign(thresholds.size(), 0.0);
    for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
      EdgeMask mask = prune_by_threshold(alpha, g.num_edges(), thresholds[ti]);
      std::size_t kept = 0;
      for (auto b : mask) kept += b;
      for (std::uint64_t seed : cfg.seeds) {
        TrainResult tr = train(g, gcn_cfg(seed), mask);
        double acc = evaluate(tr.model, g, g.test_mask, mask).accuracy;
        result.points.push_back({thresholds[ti], source, seed, acc, kept});
        curve.mean_diff[ti] += (acc - unpruned[seed]) / static_cast<double>(cfg.seeds.size());
      }
    }
    curves[source] = curve;
  }

  auto trapezoid = [&thresholds](const std::vector<double>& d) {
    double area = 0.0;
    for (std::size_t i = 0; i + 1 < thresholds.size(); ++i)
      area += (thresholds[i + 1] - thresholds[i]) * (d[i] + d[i + 1]) / 2.0;
    return area;
  };
  result.auc_baseline = trapezoid(curves["baseline"].mean_diff);
  result.auc_car = trapezoid(curves["car"].mean_diff);
  return result;
}

}  // namespace car
