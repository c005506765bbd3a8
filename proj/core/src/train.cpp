#include "car/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace car {

TrainMode mode_from_string(const std::string& s) {
  if (s == "baseline") return TrainMode::Baseline;
  if (s == "car") return TrainMode::Car;
  if (s == "neighbor-vote") return TrainMode::NeighborVote;
  throw DataError("unknown mode '" + s + "' (expected baseline, car, neighbor-vote)");
}

std::string mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::Baseline: return "baseline";
    case TrainMode::Car: return "car";
    case TrainMode::NeighborVote: return "neighbor-vote";
  }
  return "?";
}

std::vector<Intervention> sample_intervention_round(const Graph& g, const EdgeMask& mask,
                                                    const std::vector<std::uint32_t>& entities,
                                                    std::size_t layers, std::mt19937_64& rng) {
  std::vector<std::uint32_t> order(entities);
  std::sort(order.begin(), order.end());
  order.erase(std::unique(order.begin(), order.end()), order.end());

  std::vector<Intervention> out;
  // Nodes whose prediction an already-kept removal can reach: each kept
  // entity m plus its (L-1)-hop in-neighborhood.
  std::unordered_set<std::uint32_t> covered;
  std::unordered_set<std::uint32_t> kept;
  std::vector<std::size_t> active;
  for (std::uint32_t n : order) {
    active.clear();
    for (std::size_t e = g.in_offsets[n]; e < g.in_offsets[n + 1]; ++e)
      if (mask[e]) active.push_back(e);
    if (active.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, active.size() - 1);
    std::size_t edge = active[pick(rng)];

    // Removing an in-edge of n reaches exactly n plus nothing else at the
    // final layer, but earlier kept removals reach n when n lies in their
    // coverage; and this removal reaches a kept m when n lies in m's
    // coverage. Both directions must be clean.
    if (covered.count(n)) continue;
    auto reach = l_hop_in_neighborhood(g, mask, n, layers > 0 ? layers - 1 : 0);
    bool conflict = false;
    for (std::uint32_t x : reach)
      if (kept.count(x)) {
        conflict = true;
        break;
      }
    if (conflict) continue;

    out.push_back({n, edge});
    kept.insert(n);
    covered.insert(n);
    covered.insert(reach.begin(), reach.end());
  }
  return out;
}

double causal_effect_from_losses(double loss_base, double loss_post, double degree,
                                 double temperature) {
  double rho = loss_post / std::max(loss_base, 1e-9);
  double x = std::expm1(degree * std::log(rho));
  x = std::clamp(x, -1e6, 1e6);
  return 1.0 / (1.0 + std::exp(-x / temperature));
}

double causal_effect(const Model& m, const Graph& g, const EdgeMask& mask,
                     const ForwardResult& fwd, const Intervention& iv, double temperature) {
  const std::size_t c = m.cfg.num_classes;
  const int label = g.labels[iv.entity];
  std::vector<double> base_row(c);
  std::copy_n(fwd.probs.values().data() + iv.entity * c, c, base_row.begin());
  double base = per_node_cross_entropy(base_row, label);
  std::vector<double> post_row = node_predict_minus_edge(m, g, mask, fwd, iv.entity, iv.edge);
  double post = per_node_cross_entropy(post_row, label);
  double degree = static_cast<double>(active_in_degree(g, mask, iv.entity));
  return causal_effect_from_losses(base, post, degree, temperature);
}

double neighbor_vote_effect(const Graph& g, const EdgeMask& mask, const Intervention& iv,
                            double temperature) {
  const std::size_t C = g.num_classes;
  std::vector<double> counts(C, 0.0);
  std::size_t degree = 0;
  for (std::size_t e = g.in_offsets[iv.entity]; e < g.in_offsets[iv.entity + 1]; ++e) {
    if (!mask[e]) continue;
    counts[g.labels[g.src[e]]] += 1.0;
    ++degree;
  }
  auto vote_ce = [C](const std::vector<double>& cnt, int label) {
    double mx = *std::max_element(cnt.begin(), cnt.end());
    double sum = 0.0;
    std::vector<double> p(C);
    for (std::size_t k = 0; k < C; ++k) {
      p[k] = std::exp(cnt[k] - mx);
      sum += p[k];
    }
    return -std::log(std::max(p[label] / sum, kProbFloor));
  };
  const int label = g.labels[iv.entity];
  double base = vote_ce(counts, label);
  std::vector<double> post(counts);
  post[g.labels[g.src[iv.edge]]] -= 1.0;  // all-zero histogram softmaxes to uniform
  double post_loss = vote_ce(post, label);
  return causal_effect_from_losses(base, post_loss, static_cast<double>(degree), temperature);
}

Tensor causal_loss(const Tensor& alpha, const std::vector<std::vector<std::uint32_t>>& positions,
                   const std::vector<std::vector<double>>& effects) {
  if (positions.size() != effects.size())
    throw DataError("causal_loss: rounds mismatch between positions and effects");
  Tensor acc;
  std::size_t nonempty = 0;
  for (std::size_t r = 0; r < positions.size(); ++r) {
    if (positions[r].empty()) continue;
    ++nonempty;
    Tensor sel = gather_rows(alpha, positions[r]);
    Tensor bce = binary_cross_entropy(sel, effects[r]);
    acc = nonempty == 1 ? bce : add(acc, bce);
  }
  if (nonempty == 0) return Tensor::scalar(0.0);
  return scalar_mul(acc, 1.0 / static_cast<double>(nonempty));
}

Tensor total_loss(const Tensor& prediction_loss, const Tensor& causal, double lambda) {
  return add(prediction_loss, scalar_mul(causal, lambda));
}

EvalStats evaluate(const Model& m, const Graph& g, const std::vector<std::uint8_t>& node_mask) {
  return evaluate(m, g, node_mask, full_mask(g));
}

EvalStats evaluate(const Model& m, const Graph& g, const std::vector<std::uint8_t>& node_mask,
                   const EdgeMask& edge_mask) {
  NoGrad ng;
  ForwardResult fwd = node_forward(m, g, edge_mask);
  const std::size_t c = m.cfg.num_classes;
  std::size_t total = 0, correct = 0;
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    if (!node_mask[i]) continue;
    ++total;
    const double* row = fwd.probs.values().data() + i * c;
    std::size_t arg = 0;
    for (std::size_t k = 1; k < c; ++k)
      if (row[k] > row[arg]) arg = k;  // ties keep the lowest index
    if (static_cast<int>(arg) == g.labels[i]) ++correct;
  }
  if (total == 0) throw DataError("evaluate: empty node mask");
  EvalStats s;
  s.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  s.loss = cross_entropy(fwd.probs, g.labels, node_mask).item();
  return s;
}

TrainResult train(const Graph& g, const TrainConfig& cfg) {
  return train(g, cfg, full_mask(g));
}

TrainResult train(const Graph& g, const TrainConfig& cfg, const EdgeMask& mask) {
  if (g.num_classes < 2) throw DataError("train: graph needs at least 2 classes");
  if (g.feature_dim == 0) throw DataError("train: graph has no features");
  std::vector<std::uint32_t> train_ids;
  for (std::uint32_t i = 0; i < g.num_nodes; ++i)
    if (!g.train_mask.empty() && g.train_mask[i]) train_ids.push_back(i);
  if (train_ids.empty()) throw DataError("train: empty training split");
  bool has_val = false;
  for (std::size_t i = 0; i < g.val_mask.size(); ++i) has_val |= g.val_mask[i] != 0;
  if (!has_val) throw DataError("train: empty validation split");

  ModelConfig mc;
  mc.mechanism = cfg.mechanism;
  mc.layers = cfg.layers;
  mc.heads = cfg.heads;
  mc.hidden = cfg.hidden;
  mc.in_dim = g.feature_dim;
  mc.num_classes = g.num_classes;
  mc.task = Task::NodeClassification;
  Model model = make_model(mc, cfg.seed);
  Adam opt(model.parameters(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  std::mt19937_64 sample_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  const bool car_on = cfg.mode != TrainMode::Baseline && cfg.lambda != 0.0;
  if (car_on && cfg.mechanism == Mechanism::GCN)
    throw DataError("train: gcn layers expose no attention to regularize");

  std::vector<std::vector<std::uint32_t>> batches;
  for (std::size_t i = 0; i < train_ids.size(); i += cfg.batch_size)
    batches.emplace_back(train_ids.begin() + i,
                         train_ids.begin() + std::min(i + cfg.batch_size, train_ids.size()));

  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs = 0;
  auto t0 = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double epoch_pred = 0.0, epoch_causal = 0.0;
    for (const auto& batch : batches) {
      Tape tape;
      for (Tensor& p : model.parameters()) p.zero_grad();
      ForwardResult fwd = node_forward(model, g, mask);
      std::vector<std::uint8_t> bmask(g.num_nodes, 0);
      for (std::uint32_t n : batch) bmask[n] = 1;
      Tensor lp = cross_entropy(fwd.probs, g.labels, bmask);
      Tensor loss = lp;
      double causal_val = 0.0;
      if (car_on) {
        std::vector<std::vector<std::uint32_t>> positions;
        std::vector<std::vector<double>> effects;
        for (std::size_t r = 0; r < cfg.rounds; ++r) {
          auto round = sample_intervention_round(g, mask, batch, cfg.layers, sample_rng);
          std::vector<std::uint32_t> pos;
          std::vector<double> cs;
          pos.reserve(round.size());
          cs.reserve(round.size());
          for (const Intervention& iv : round) {
            double c = cfg.mode == TrainMode::NeighborVote
                           ? neighbor_vote_effect(g, mask, iv, cfg.temperature)
                           : causal_effect(model, g, mask, fwd, iv, cfg.temperature);
            int p = fwd.active_index(static_cast<std::uint32_t>(iv.edge));
            if (p < 0) throw DataError("train: sampled edge is not active");
            pos.push_back(static_cast<std::uint32_t>(p));
            cs.push_back(c);
          }
          positions.push_back(std::move(pos));
          effects.push_back(std::move(cs));
        }
        Tensor lc = causal_loss(fwd.alphas.back(), positions, effects);
        causal_val = lc.item();
        loss = total_loss(lp, lc, cfg.lambda);
      }
      if (!std::isfinite(loss.item()))
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch));
      tape.backward(loss);
      opt.step();
      epoch_pred += lp.item();
      epoch_causal += causal_val;
    }
    EvalStats val = evaluate(model, g, g.val_mask, mask);
    EpochStats es;
    es.epoch = epoch;
    es.train_loss = epoch_pred / static_cast<double>(batches.size());
    es.causal = epoch_causal / static_cast<double>(batches.size());
    es.val_loss = val.loss;
    result.history.push_back(es);
    result.epochs_run = epoch;
    if (val.loss < best_val) {
      best_val = val.loss;
      result.model = clone_model(model);
      result.best_epoch = epoch;
      bad_epochs = 0;
    } else if (++bad_epochs >= cfg.patience) {
      break;
    }
  }
  result.best_val_loss = best_val;
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace car
