#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "car/train.hpp"

using namespace car;

namespace {

bool is_in_edge_of(const Graph& g, std::uint32_t entity, std::size_t edge) {
  return edge < g.num_edges() && g.tgt[edge] == entity;
}

}  // namespace

TEST_CASE("disjoint stars keep one sampled edge per entity") {
  // centers 0,1,2; leaves feed them
  Graph g = build_graph(8, {{3, 0}, {4, 0}, {5, 1}, {6, 1}, {7, 2}}, true);
  std::mt19937_64 rng(1);
  auto ivs = sample_intervention_round(g, full_mask(g), {0, 1, 2}, 1, rng);
  REQUIRE(ivs.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(ivs[k].entity == k);
    CHECK(is_in_edge_of(g, ivs[k].entity, ivs[k].edge));
  }
}

TEST_CASE("overlapping receptive fields drop the later entity") {
  // chain 0 -> 1 -> 2 with two layers: keeping (0,1) for entity 1 covers
  // node 1, and entity 2's only candidate (1,2) reaches back into it.
  Graph g = build_graph(3, {{0, 1}, {1, 2}}, true);
  std::mt19937_64 rng(3);
  auto ivs = sample_intervention_round(g, full_mask(g), {1, 2}, 2, rng);
  REQUIRE(ivs.size() == 1);
  CHECK(ivs[0].entity == 1);
  CHECK(g.src[ivs[0].edge] == 0);
  CHECK(g.tgt[ivs[0].edge] == 1);
}

TEST_CASE("entities without active in-edges are skipped") {
  Graph g = build_graph(3, {{0, 1}}, true);
  std::mt19937_64 rng(5);
  auto ivs = sample_intervention_round(g, full_mask(g), {0, 1, 2}, 1, rng);
  REQUIRE(ivs.size() == 1);
  CHECK(ivs[0].entity == 1);

  EdgeMask mask = full_mask(g);
  mask[0] = 0;
  CHECK(sample_intervention_round(g, mask, {0, 1, 2}, 1, rng).empty());
}

TEST_CASE("sampled rounds are valid and ascending on random graphs") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_int_distribution<std::uint32_t> node(0, 19);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
    for (int e = 0; e < 40; ++e) {
      std::uint32_t a = node(rng), b = node(rng);
      if (a != b) edges.push_back({a, b});
    }
    Graph g = build_graph(20, edges, true);
    std::vector<std::uint32_t> entities(20);
    for (std::uint32_t i = 0; i < 20; ++i) entities[i] = i;
    const std::size_t L = 1 + trial % 3;
    auto ivs = sample_intervention_round(g, full_mask(g), entities, L, rng);
    for (std::size_t k = 0; k < ivs.size(); ++k) {
      CHECK(is_in_edge_of(g, ivs[k].entity, ivs[k].edge));
      if (k) CHECK(ivs[k].entity > ivs[k - 1].entity);
    }
    // kept removals never reach another kept entity's receptive field
    for (std::size_t a = 0; a < ivs.size(); ++a)
      for (std::size_t b = 0; b < ivs.size(); ++b) {
        if (a == b) continue;
        auto reach = l_hop_in_neighborhood(g, ivs[b].entity, L - 1);
        CHECK(ivs[a].entity != ivs[b].entity);
        CHECK(!std::binary_search(reach.begin(), reach.end(), ivs[a].entity));
      }
  }
}

TEST_CASE("effect calibration") {
  SUBCASE("equal losses land exactly on one half") {
    for (double loss : {0.1, 0.37, 2.0})
      for (double d : {1.0, 2.0, 7.0})
        for (double t : {0.1, 1.0, 10.0})
          CHECK(causal_effect_from_losses(loss, loss, d, t) == 0.5);
  }
  SUBCASE("a ten percent loss increase at degree one is sigmoid of one") {
    CHECK(causal_effect_from_losses(1.0, 1.1, 1.0, 0.1) ==
          doctest::Approx(0.7310585786300049).epsilon(1e-9));
  }
  SUBCASE("doubling the loss at degree two saturates") {
    const double c = causal_effect_from_losses(0.5, 1.0, 2.0, 0.1);
    CHECK(c > 1.0 - 1e-13);
    CHECK(c <= 1.0);
  }
  SUBCASE("effect grows with the post-removal loss") {
    // stay near the base loss so the sigmoid has room in both directions
    double prev = -1.0;
    for (double post : {0.6, 0.65, 0.7, 0.72, 0.74, 0.76}) {
      const double c = causal_effect_from_losses(0.7, post, 3.0, 0.1);
      CHECK(c > prev);
      prev = c;
    }
    // far from it the effect saturates without overshooting
    CHECK(causal_effect_from_losses(0.7, 2.0, 3.0, 0.1) == 1.0);
  }
  SUBCASE("effects stay inside the unit interval") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> loss(1e-12, 50.0), deg(1.0, 20.0);
    for (int i = 0; i < 200; ++i) {
      const double c = causal_effect_from_losses(loss(rng), loss(rng), std::floor(deg(rng)), 0.1);
      CHECK(c >= 0.0);
      CHECK(c <= 1.0);
    }
  }
  SUBCASE("extreme ratios are clamped, not overflowed") {
    const double hi = causal_effect_from_losses(1e-12, 40.0, 20.0, 0.1);
    CHECK(hi == 1.0);
    // the power term bottoms out at -1, so the floor is sigmoid(-1/T)
    const double lo = causal_effect_from_losses(40.0, 1e-9, 20.0, 0.1);
    CHECK(lo == doctest::Approx(4.5397868702434395e-05).epsilon(1e-9));
  }
}

TEST_CASE("measured effects match their ingredients") {
  std::mt19937_64 rng(13);
  Graph g = build_graph(6, {{0, 2}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {1, 4}}, true);
  g.feature_dim = 3;
  g.features.resize(18);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (auto& v : g.features) v = dist(rng);
  g.num_classes = 2;
  g.labels = {0, 1, 0, 1, 0, 1};

  ModelConfig mc;
  mc.in_dim = 3;
  mc.hidden = 4;
  mc.num_classes = 2;
  mc.layers = 2;
  Model m = make_model(mc, 17);
  EdgeMask mask = full_mask(g);
  ForwardResult fwd = node_forward(m, g, mask);

  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    const std::uint32_t n = g.tgt[e];
    const Intervention iv{n, e};
    const double measured = causal_effect(m, g, mask, fwd, iv, 0.1);

    std::vector<double> base_row(2), post_row = node_predict_minus_edge(m, g, mask, fwd, n, e);
    for (std::size_t c = 0; c < 2; ++c) base_row[c] = fwd.probs.values()[n * 2 + c];
    const double expect = causal_effect_from_losses(
        per_node_cross_entropy(base_row, g.labels[n]),
        per_node_cross_entropy(post_row, g.labels[n]),
        static_cast<double>(active_in_degree(g, mask, n)), 0.1);
    CHECK(measured == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("neighbor-vote ablation on a two-voter entity") {
  // node 2 hears two class-0 votes and is labeled 0; removing one vote
  // still predicts 0 but with less margin, a mild positive effect.
  Graph g = build_graph(3, {{0, 2}, {1, 2}}, true);
  g.num_classes = 2;
  g.labels = {0, 0, 0};
  const Intervention iv{2, 0};
  CHECK(neighbor_vote_effect(g, full_mask(g), iv, 0.1) == 1.0);
  CHECK(neighbor_vote_effect(g, full_mask(g), iv, 10.0) ==
        doctest::Approx(0.62459909288102722).epsilon(1e-12));
}

TEST_CASE("neighbor-vote falls back to uniform when the histogram empties") {
  Graph g = build_graph(2, {{0, 1}}, true);
  g.num_classes = 2;
  g.labels = {0, 0};
  const double c = neighbor_vote_effect(g, full_mask(g), {1, 0}, 0.1);
  CHECK(c > 0.5);  // losing the only agreeing vote hurts
  CHECK(c <= 1.0);
}

TEST_CASE("alignment loss at hand-checked points") {
  const Tensor alpha = Tensor::from({4}, {0.5, 0.9, 0.1, 0.7311});
  SUBCASE("half against half is log two") {
    CHECK(causal_loss(alpha, {{0}}, {{0.5}}).item() ==
          doctest::Approx(0.69314718055994529).epsilon(1e-12));
  }
  SUBCASE("confident weight against a full effect") {
    CHECK(causal_loss(alpha, {{3}}, {{1.0}}).item() ==
          doctest::Approx(0.31320502968286684).epsilon(1e-12));
  }
  SUBCASE("rounds average, and empty rounds are skipped") {
    const double two_rounds = causal_loss(alpha, {{0}, {3}}, {{0.5}, {1.0}}).item();
    const double with_empty = causal_loss(alpha, {{0}, {}, {3}}, {{0.5}, {}, {1.0}}).item();
    const double one_round = causal_loss(alpha, {{0, 3}}, {{0.5, 1.0}}).item();
    const double expect = 0.5 * (0.69314718055994529 + 0.31320502968286684);
    CHECK(two_rounds == doctest::Approx(expect).epsilon(1e-12));
    CHECK(with_empty == doctest::Approx(expect).epsilon(1e-12));
    CHECK(one_round == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("total loss combines linearly") {
  CHECK(total_loss(Tensor::scalar(1.0), Tensor::scalar(0.5), 5.0).item() == 3.5);
  CHECK(total_loss(Tensor::scalar(0.25), Tensor::scalar(123.0), 0.0).item() == 0.25);
  CHECK(total_loss(Tensor::scalar(0.0), Tensor::scalar(0.0), 1.0).item() == 0.0);
}

TEST_CASE("a zero weight trains bit-identically to the plain objective") {
  SynthConfig sc;
  sc.n = 60;
  sc.num_classes = 3;
  sc.target_homophily = 0.6;
  sc.mean_degree = 3.0;
  sc.feature_dim = 5;
  sc.seed = 1;
  sc.train_per_class = 5;
  sc.val_count = 15;
  Graph g = generate_synthetic(sc);

  TrainConfig base;
  base.mechanism = Mechanism::GAT;
  base.layers = 1;
  base.heads = 1;
  base.hidden = 4;
  base.max_epochs = 8;
  base.seed = 42;

  TrainConfig plain = base;
  plain.mode = TrainMode::Baseline;
  plain.lambda = 1.0;
  TrainConfig zero = base;
  zero.mode = TrainMode::Car;
  zero.lambda = 0.0;

  TrainResult a = train(g, plain), b = train(g, zero);
  CHECK(a.epochs_run == b.epochs_run);
  CHECK(a.best_epoch == b.best_epoch);
  auto pa = a.model.parameters(), pb = b.model.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t k = 0; k < pa.size(); ++k) CHECK(pa[k].values() == pb[k].values());
}
