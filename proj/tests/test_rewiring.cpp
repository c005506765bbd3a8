#include <doctest.h>

#include <cmath>
#include <random>

#include "car/rewiring.hpp"

using namespace car;

TEST_CASE("threshold pruning keeps exactly the clearing edges") {
  const std::vector<double> alpha = {0.1, 0.5, 0.9};
  EdgeMask all = prune_by_threshold(alpha, 3, 0.0);
  CHECK(all == EdgeMask{1, 1, 1});
  EdgeMask mid = prune_by_threshold(alpha, 3, 0.5);
  CHECK(mid == EdgeMask{0, 1, 1});
  EdgeMask none = prune_by_threshold(alpha, 3, 1.0 + 1e-9);
  CHECK(none == EdgeMask{0, 0, 0});
}

TEST_CASE("raising the threshold only removes edges") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> alpha(25);
    for (auto& v : alpha) v = u(rng);
    EdgeMask prev = prune_by_threshold(alpha, alpha.size(), 0.0);
    for (double t : {0.2, 0.4, 0.6, 0.8, 1.0}) {
      EdgeMask cur = prune_by_threshold(alpha, alpha.size(), t);
      for (std::size_t e = 0; e < alpha.size(); ++e)
        CHECK(cur[e] <= prev[e]);
      prev = cur;
    }
  }
}

TEST_CASE("attention export covers every edge with a finite weight") {
  SynthConfig sc;
  sc.n = 30;
  sc.num_classes = 2;
  sc.target_homophily = 0.6;
  sc.mean_degree = 3.0;
  sc.feature_dim = 4;
  sc.seed = 5;
  sc.train_per_class = 5;
  sc.val_count = 5;
  Graph g = generate_synthetic(sc);

  ModelConfig mc;
  mc.in_dim = 4;
  mc.hidden = 4;
  mc.num_classes = 2;
  Model m = make_model(mc, 9);
  auto alphas = edge_alphas(m, g);
  REQUIRE(alphas.size() == g.num_edges());
  for (double a : alphas) {
    CHECK(std::isfinite(a));
    CHECK(a >= 0.0);
    CHECK(a <= 1.0 + 1e-12);
  }
}

TEST_CASE("retraining at a zero threshold reproduces the unpruned run") {
  SynthConfig sc;
  sc.n = 40;
  sc.num_classes = 2;
  sc.target_homophily = 0.5;
  sc.mean_degree = 3.0;
  sc.feature_dim = 4;
  sc.seed = 2;
  sc.train_per_class = 5;
  sc.val_count = 10;
  Graph g = generate_synthetic(sc);

  ModelConfig mc;
  mc.in_dim = 4;
  mc.hidden = 4;
  mc.num_classes = 2;
  Model baseline = make_model(mc, 1);
  Model treated = make_model(mc, 2);

  RewiringConfig rc;
  rc.thresholds = {0.0, 0.5};
  rc.seeds = {0, 1};
  rc.gcn_hidden = 4;
  rc.gcn_layers = 1;
  rc.max_epochs = 5;
  rc.patience = 5;

  RewiringResult r = rewired_gcn_experiment(g, baseline, treated, rc);
  CHECK(r.points.size() == rc.thresholds.size() * rc.seeds.size() * 2);
  REQUIRE(r.unpruned.size() == rc.seeds.size());

  for (const auto& p : r.points) {
    CHECK((p.source == "baseline" || p.source == "car"));
    CHECK(p.kept_edges <= g.num_edges());
    if (p.threshold == 0.0) {
      CHECK(p.kept_edges == g.num_edges());
      for (const auto& [seed, acc] : r.unpruned)
        if (seed == p.seed) CHECK(p.accuracy == acc);
    }
  }
}

TEST_CASE("a single threshold spans no area") {
  SynthConfig sc;
  sc.n = 30;
  sc.num_classes = 2;
  sc.target_homophily = 0.5;
  sc.mean_degree = 2.0;
  sc.feature_dim = 3;
  sc.seed = 8;
  sc.train_per_class = 4;
  sc.val_count = 6;
  Graph g = generate_synthetic(sc);

  ModelConfig mc;
  mc.in_dim = 3;
  mc.hidden = 3;
  mc.num_classes = 2;
  RewiringConfig rc;
  rc.thresholds = {0.0};
  rc.seeds = {0};
  rc.gcn_hidden = 3;
  rc.gcn_layers = 1;
  rc.max_epochs = 3;
  rc.patience = 3;
  RewiringResult r = rewired_gcn_experiment(g, make_model(mc, 3), make_model(mc, 4), rc);
  CHECK(r.auc_baseline == 0.0);
  CHECK(r.auc_car == 0.0);
}
