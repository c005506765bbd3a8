#include "car/attention.hpp"

#include <cmath>

namespace car {

Mechanism mechanism_from_string(const std::string& s) {
  if (s == "gat") return Mechanism::GAT;
  if (s == "gatv2") return Mechanism::GATv2;
  if (s == "transformer") return Mechanism::GraphTransformer;
  if (s == "gcn") return Mechanism::GCN;
  throw DataError("unknown mechanism '" + s + "' (expected gat, gatv2, transformer, gcn)");
}

std::string mechanism_name(Mechanism m) {
  switch (m) {
    case Mechanism::GAT: return "gat";
    case Mechanism::GATv2: return "gatv2";
    case Mechanism::GraphTransformer: return "transformer";
    case Mechanism::GCN: return "gcn";
  }
  return "?";
}

std::vector<Tensor> AttentionLayer::parameters() const {
  std::vector<Tensor> out;
  for (std::size_t k = 0; k < W.size(); ++k) {
    out.push_back(W[k]);
    if (k < a.size()) out.push_back(a[k]);
  }
  return out;
}

namespace {

Tensor glorot(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-limit, limit);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = u(rng);
  Shape s = cols == 0 ? Shape{rows} : Shape{rows, cols};
  return Tensor::from(s, std::move(v), /*requires_grad=*/true);
}

}  // namespace

AttentionLayer make_attention_layer(Mechanism mech, std::size_t heads, std::size_t f_in,
                                    std::size_t f_out, std::mt19937_64& rng) {
  AttentionLayer layer;
  layer.mechanism = mech;
  layer.heads = mech == Mechanism::GCN ? 1 : heads;
  layer.f_in = f_in;
  layer.f_out = f_out;
  const bool has_a = mech == Mechanism::GAT || mech == Mechanism::GATv2;
  for (std::size_t k = 0; k < layer.heads; ++k) {
    layer.W.push_back(glorot(f_out, f_in, rng));
    if (has_a) {
      double limit = std::sqrt(6.0 / static_cast<double>(2 * f_out + 1));
      std::uniform_real_distribution<double> u(-limit, limit);
      std::vector<double> v(2 * f_out);
      for (double& x : v) x = u(rng);
      layer.a.push_back(Tensor::from({2 * f_out}, std::move(v), /*requires_grad=*/true));
    }
  }
  return layer;
}

ActiveEdges collect_active(const Graph& g, const EdgeMask& mask) {
  if (mask.size() != g.num_edges())
    throw DataError("edge mask has " + std::to_string(mask.size()) + " entries for " +
                    std::to_string(g.num_edges()) + " edges");
  ActiveEdges a;
  for (std::uint32_t e = 0; e < g.num_edges(); ++e) {
    if (!mask[e]) continue;
    a.edge_ids.push_back(e);
    a.src.push_back(g.src[e]);
    a.tgt.push_back(g.tgt[e]);
  }
  return a;
}

Tensor score_edges(const AttentionLayer& layer, std::size_t head, const Tensor& proj,
                   const ActiveEdges& active) {
  Tensor psrc = gather_rows(proj, active.src);
  Tensor ptgt = gather_rows(proj, active.tgt);
  switch (layer.mechanism) {
    case Mechanism::GAT:
      return leaky_relu(dot_cols(concat_cols(psrc, ptgt), layer.a[head]), kScoreSlope);
    case Mechanism::GATv2:
      return dot_cols(leaky_relu(concat_cols(psrc, ptgt), kScoreSlope), layer.a[head]);
    case Mechanism::GraphTransformer:
      return scalar_mul(row_sum(mul(psrc, ptgt)),
                        1.0 / std::sqrt(static_cast<double>(layer.f_out)));
    case Mechanism::GCN:
      break;
  }
  throw DataError("score_edges: gcn layers have no attention scores");
}

namespace {

LayerResult gcn_forward(const AttentionLayer& layer, const Graph& g, const ActiveEdges& active,
                        const Tensor& h) {
  Tensor proj = matmul(h, transpose(layer.W[0]));
  // Active in-degrees; the implicit self-loop adds 1 to each.
  std::vector<double> deg(g.num_nodes, 0.0);
  for (std::size_t e = 0; e < active.tgt.size(); ++e) deg[active.tgt[e]] += 1.0;
  std::vector<double> coeff(active.tgt.size());
  for (std::size_t e = 0; e < active.tgt.size(); ++e)
    coeff[e] = 1.0 / std::sqrt((deg[active.src[e]] + 1.0) * (deg[active.tgt[e]] + 1.0));
  std::vector<double> self(g.num_nodes);
  for (std::size_t j = 0; j < g.num_nodes; ++j) self[j] = 1.0 / (deg[j] + 1.0);

  Tensor messages = scale_rows(gather_rows(proj, active.src),
                               Tensor::from({active.src.size()}, std::move(coeff)));
  Tensor agg = segment_sum(messages, active.tgt, g.num_nodes);
  Tensor self_term = scale_rows(proj, Tensor::from({g.num_nodes}, std::move(self)));
  LayerResult r;
  r.h = add(agg, self_term);
  r.head_proj.push_back(proj);
  return r;
}

}  // namespace

LayerResult layer_forward(const AttentionLayer& layer, const Graph& g, const ActiveEdges& active,
                          const Tensor& h) {
  if (layer.mechanism == Mechanism::GCN) return gcn_forward(layer, g, active, h);

  LayerResult r;
  Tensor h_acc, alpha_acc;
  for (std::size_t k = 0; k < layer.heads; ++k) {
    Tensor proj = matmul(h, transpose(layer.W[k]));
    r.head_proj.push_back(proj);
    Tensor scores = score_edges(layer, k, proj, active);
    Tensor alpha = segment_softmax(scores, active.tgt, g.num_nodes);
    Tensor weighted = scale_rows(gather_rows(proj, active.src), alpha);
    Tensor h_head = segment_sum(weighted, active.tgt, g.num_nodes);
    h_acc = k == 0 ? h_head : add(h_acc, h_head);
    alpha_acc = k == 0 ? alpha : add(alpha_acc, alpha);
  }
  const double inv_k = 1.0 / static_cast<double>(layer.heads);
  r.h = scalar_mul(h_acc, inv_k);
  r.alpha = scalar_mul(alpha_acc, inv_k);
  return r;
}

}  // namespace car
