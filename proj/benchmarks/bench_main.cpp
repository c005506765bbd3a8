#include <benchmark/benchmark.h>

#include <random>

#include "car/train.hpp"

using namespace car;

namespace {

Graph bench_graph(std::size_t n, double homophily) {
  SynthConfig sc;
  sc.n = n;
  sc.num_classes = 5;
  sc.target_homophily = homophily;
  sc.mean_degree = 4.0;
  sc.feature_dim = 10;
  sc.seed = 1;
  sc.train_per_class = 20;
  sc.val_count = n / 5;
  return generate_synthetic(sc);
}

Model bench_model(Mechanism mech, std::size_t layers, const Graph& g) {
  ModelConfig mc;
  mc.mechanism = mech;
  mc.layers = layers;
  mc.heads = 3;
  mc.hidden = 25;
  mc.in_dim = g.feature_dim;
  mc.num_classes = g.num_classes;
  return make_model(mc, 7);
}

void forward_mechanism(benchmark::State& state, Mechanism mech) {
  Graph g = bench_graph(1000, 0.5);
  Model m = bench_model(mech, 2, g);
  EdgeMask mask = full_mask(g);
  NoGrad off;
  for (auto _ : state) {
    ForwardResult fwd = node_forward(m, g, mask);
    benchmark::DoNotOptimize(fwd.probs.values().data());
  }
}

void BM_forward_gat(benchmark::State& state) { forward_mechanism(state, Mechanism::GAT); }
void BM_forward_gatv2(benchmark::State& state) { forward_mechanism(state, Mechanism::GATv2); }
void BM_forward_transformer(benchmark::State& state) {
  forward_mechanism(state, Mechanism::GraphTransformer);
}

void BM_intervention_round(benchmark::State& state) {
  Graph g = bench_graph(1000, 0.3);
  Model m = bench_model(Mechanism::GAT, static_cast<std::size_t>(state.range(0)), g);
  EdgeMask mask = full_mask(g);
  NoGrad off;
  ForwardResult fwd = node_forward(m, g, mask);
  std::vector<std::uint32_t> entities;
  for (std::uint32_t i = 0; i < g.num_nodes; ++i)
    if (g.train_mask[i]) entities.push_back(i);
  std::mt19937_64 rng(3);
  for (auto _ : state) {
    auto round = sample_intervention_round(g, mask, entities,
                                           static_cast<std::size_t>(state.range(0)), rng);
    double acc = 0.0;
    for (const auto& iv : round) acc += causal_effect(m, g, mask, fwd, iv, 0.1);
    benchmark::DoNotOptimize(acc);
  }
}

void epoch_cost(benchmark::State& state, TrainMode mode, double lambda) {
  Graph g = bench_graph(1000, 0.3);
  TrainConfig cfg;
  cfg.hidden = 25;
  cfg.heads = 3;
  cfg.max_epochs = 3;
  cfg.patience = 3;
  cfg.mode = mode;
  cfg.lambda = lambda;
  for (auto _ : state) {
    TrainResult r = train(g, cfg);
    benchmark::DoNotOptimize(r.best_val_loss);
  }
}

void BM_train_baseline(benchmark::State& state) { epoch_cost(state, TrainMode::Baseline, 0.0); }
void BM_train_car(benchmark::State& state) { epoch_cost(state, TrainMode::Car, 1.0); }

}  // namespace

BENCHMARK(BM_forward_gat)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_forward_gatv2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_forward_transformer)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_intervention_round)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_train_baseline)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_train_car)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
