#include "car/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace car {

using nlohmann::json;

std::string task_name(Task t) {
  switch (t) {
    case Task::NodeClassification: return "node";
    case Task::GraphBinary: return "graph-binary";
    case Task::GraphRegression: return "graph-regression";
  }
  return "?";
}

Task task_from_string(const std::string& s) {
  if (s == "node") return Task::NodeClassification;
  if (s == "graph-binary") return Task::GraphBinary;
  if (s == "graph-regression") return Task::GraphRegression;
  throw DataError("unknown task '" + s + "'");
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  if (embedding.defined()) out.push_back(embedding);
  out.push_back(W1);
  out.push_back(b1);
  for (const auto& l : layers) {
    auto p = l.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  out.push_back(W2);
  out.push_back(b2);
  return out;
}

namespace {

Tensor glorot_mat(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-limit, limit);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = u(rng);
  return Tensor::from({rows, cols}, std::move(v), /*requires_grad=*/true);
}

std::size_t head_rows(const ModelConfig& cfg) {
  return cfg.task == Task::NodeClassification ? cfg.num_classes : 1;
}

}  // namespace

Model make_model(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.layers == 0) throw DataError("model needs at least one attention layer");
  if (cfg.mechanism != Mechanism::GCN && cfg.heads == 0)
    throw DataError("model needs at least one head");
  std::mt19937_64 rng(seed);
  Model m;
  m.cfg = cfg;
  std::size_t in_dim = cfg.in_dim;
  if (cfg.embedding_categories > 0) {
    m.embedding = glorot_mat(cfg.embedding_categories, cfg.hidden, rng);
    m.embedding.set_name("embedding");
    in_dim = cfg.hidden;
    m.cfg.in_dim = in_dim;
  }
  if (in_dim == 0) throw DataError("model input dimension is zero");
  m.W1 = glorot_mat(cfg.hidden, in_dim, rng);
  m.W1.set_name("W1");
  m.b1 = Tensor::zeros({cfg.hidden}, /*requires_grad=*/true);
  m.b1.set_name("b1");
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    auto layer = make_attention_layer(cfg.mechanism, cfg.heads, cfg.hidden, cfg.hidden, rng);
    for (std::size_t k = 0; k < layer.W.size(); ++k) {
      std::string base = "layer" + std::to_string(l) + ".head" + std::to_string(k);
      layer.W[k].set_name(base + ".W");
      if (k < layer.a.size()) layer.a[k].set_name(base + ".a");
    }
    m.layers.push_back(std::move(layer));
  }
  m.W2 = glorot_mat(head_rows(cfg), 2 * cfg.hidden, rng);
  m.W2.set_name("W2");
  m.b2 = Tensor::zeros({head_rows(cfg)}, /*requires_grad=*/true);
  m.b2.set_name("b2");
  return m;
}

Model clone_model(const Model& m) {
  Model c;
  c.cfg = m.cfg;
  if (m.embedding.defined()) c.embedding = m.embedding.clone();
  c.W1 = m.W1.clone();
  c.b1 = m.b1.clone();
  for (const auto& l : m.layers) {
    AttentionLayer cl;
    cl.mechanism = l.mechanism;
    cl.heads = l.heads;
    cl.f_in = l.f_in;
    cl.f_out = l.f_out;
    for (const auto& w : l.W) cl.W.push_back(w.clone());
    for (const auto& a : l.a) cl.a.push_back(a.clone());
    c.layers.push_back(std::move(cl));
  }
  c.W2 = m.W2.clone();
  c.b2 = m.b2.clone();
  return c;
}

int ForwardResult::active_index(std::uint32_t edge_id) const {
  auto it = std::lower_bound(active.edge_ids.begin(), active.edge_ids.end(), edge_id);
  if (it == active.edge_ids.end() || *it != edge_id) return -1;
  return static_cast<int>(it - active.edge_ids.begin());
}

namespace {

// Shared trunk + attention stack; fills everything except the head.
void run_trunk(const Model& m, const Graph& g, const EdgeMask& mask, ForwardResult& r) {
  r.active = collect_active(g, mask);
  Tensor X;
  if (m.cfg.embedding_categories > 0) {
    std::vector<std::uint32_t> ids(g.num_nodes);
    for (std::size_t i = 0; i < g.num_nodes; ++i) {
      double v = g.features[i * g.feature_dim];
      if (v < 0 || v >= static_cast<double>(m.cfg.embedding_categories))
        throw DataError("node category " + std::to_string(v) + " outside embedding table");
      ids[i] = static_cast<std::uint32_t>(v);
    }
    X = gather_rows(m.embedding, ids);
  } else {
    if (g.feature_dim != m.cfg.in_dim)
      throw DataError("graph features have dim " + std::to_string(g.feature_dim) +
                      " but model expects " + std::to_string(m.cfg.in_dim));
    X = Tensor::from({g.num_nodes, g.feature_dim}, g.features);
  }
  r.trunk = leaky_relu(add_bias(matmul(X, transpose(m.W1)), m.b1), kMlpSlope);
  Tensor h = r.trunk;
  for (const auto& layer : m.layers) {
    r.layer_inputs.push_back(h);
    LayerResult lr = layer_forward(layer, g, r.active, h);
    r.projections.push_back(lr.head_proj);
    if (lr.alpha.defined()) r.alphas.push_back(lr.alpha);
    h = lr.h;
  }
  r.layer_inputs.push_back(h);  // final attention output, for the head
}

}  // namespace

ForwardResult node_forward(const Model& m, const Graph& g, const EdgeMask& mask) {
  if (m.cfg.task != Task::NodeClassification)
    throw DataError("node_forward: model is not a node classifier");
  ForwardResult r;
  run_trunk(m, g, mask, r);
  Tensor act = leaky_relu(concat_cols(r.trunk, r.layer_inputs.back()), kMlpSlope);
  r.probs = softmax_rows(add_bias(matmul(act, transpose(m.W2)), m.b2));
  return r;
}

ForwardResult graph_forward_single(const Model& m, const Graph& g, const EdgeMask& mask) {
  if (m.cfg.task == Task::NodeClassification)
    throw DataError("graph_forward: model is a node classifier");
  ForwardResult r;
  run_trunk(m, g, mask, r);
  Tensor cat = concat_cols(r.trunk, r.layer_inputs.back());
  Tensor ones = Tensor::from({1, g.num_nodes}, std::vector<double>(g.num_nodes, 1.0));
  Tensor pooled = matmul(ones, cat);  // sum over nodes
  Tensor z = add_bias(matmul(leaky_relu(pooled, kMlpSlope), transpose(m.W2)), m.b2);
  r.raw = m.cfg.task == Task::GraphBinary ? sigmoid(z) : z;
  return r;
}

std::vector<ForwardResult> graph_forward(const Model& m, const std::vector<Graph>& batch) {
  std::vector<ForwardResult> out;
  out.reserve(batch.size());
  for (const Graph& g : batch) out.push_back(graph_forward_single(m, g, full_mask(g)));
  return out;
}

namespace {

// Score of edge (s -> n) for one head, from projected rows; mirrors
// score_edges' arithmetic order.
double edge_score_rows(const AttentionLayer& layer, std::size_t head, const double* ps,
                       const double* pt) {
  const std::size_t f = layer.f_out;
  switch (layer.mechanism) {
    case Mechanism::GAT: {
      const auto& a = layer.a[head].values();
      double acc = 0.0;
      for (std::size_t j = 0; j < f; ++j) acc += ps[j] * a[j];
      for (std::size_t j = 0; j < f; ++j) acc += pt[j] * a[f + j];
      return acc >= 0.0 ? acc : kScoreSlope * acc;
    }
    case Mechanism::GATv2: {
      const auto& a = layer.a[head].values();
      double acc = 0.0;
      for (std::size_t j = 0; j < f; ++j) {
        double x = ps[j];
        acc += (x >= 0.0 ? x : kScoreSlope * x) * a[j];
      }
      for (std::size_t j = 0; j < f; ++j) {
        double x = pt[j];
        acc += (x >= 0.0 ? x : kScoreSlope * x) * a[f + j];
      }
      return acc;
    }
    case Mechanism::GraphTransformer: {
      double acc = 0.0;
      for (std::size_t j = 0; j < f; ++j) acc += ps[j] * pt[j];
      return acc / std::sqrt(static_cast<double>(f));
    }
    case Mechanism::GCN:
      break;
  }
  throw DataError("edge_score_rows: gcn has no scores");
}

// Layer output row at node n with `removed_edge` excluded, averaging heads.
// tgt_override, when present, supplies per-head target-side projection rows.
std::vector<double> relayer_row(const AttentionLayer& layer, const Graph& g, const EdgeMask& mask,
                                const std::vector<Tensor>& proj, std::uint32_t n,
                                std::size_t removed_edge,
                                const std::vector<std::vector<double>>* tgt_override) {
  const std::size_t f = layer.f_out;
  std::vector<double> acc(f, 0.0);
  std::vector<std::size_t> edges;
  for (std::size_t e = g.in_offsets[n]; e < g.in_offsets[n + 1]; ++e)
    if (mask[e] && e != removed_edge) edges.push_back(e);
  for (std::size_t k = 0; k < layer.heads; ++k) {
    const auto& pv = proj[k].values();
    const double* pt = tgt_override ? (*tgt_override)[k].data() : pv.data() + n * f;
    double mx = -std::numeric_limits<double>::infinity();
    std::vector<double> score(edges.size());
    for (std::size_t i = 0; i < edges.size(); ++i) {
      score[i] = edge_score_rows(layer, k, pv.data() + g.src[edges[i]] * f, pt);
      mx = std::max(mx, score[i]);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < edges.size(); ++i) {
      score[i] = std::exp(score[i] - mx);
      sum += score[i];
    }
    std::vector<double> head(f, 0.0);
    for (std::size_t i = 0; i < edges.size(); ++i) {
      double alpha = score[i] / sum;
      const double* row = pv.data() + g.src[edges[i]] * f;
      for (std::size_t j = 0; j < f; ++j) head[j] += alpha * row[j];
    }
    for (std::size_t j = 0; j < f; ++j) acc[j] += head[j];
  }
  const double inv_k = 1.0 / static_cast<double>(layer.heads);
  for (double& x : acc) x *= inv_k;
  return acc;
}

}  // namespace

std::vector<double> node_predict_minus_edge(const Model& m, const Graph& g, const EdgeMask& mask,
                                            const ForwardResult& fwd, std::uint32_t n,
                                            std::size_t removed_edge) {
  if (g.tgt[removed_edge] != n)
    throw DataError("node_predict_minus_edge: edge does not point at the entity");
  if (!mask[removed_edge])
    throw DataError("node_predict_minus_edge: edge is already masked out");
  const std::size_t L = m.layers.size();
  if (L > 2) {
    // Changes can propagate through other nodes' activations at this depth;
    // recompute everything under the reduced mask.
    NoGrad ng;
    EdgeMask reduced = mask;
    reduced[removed_edge] = 0;
    ForwardResult full = node_forward(m, g, reduced);
    const std::size_t c = m.cfg.num_classes;
    std::vector<double> row(c);
    std::copy_n(full.probs.values().data() + n * c, c, row.begin());
    return row;
  }

  std::vector<double> h_final;
  if (L == 1) {
    h_final = relayer_row(m.layers[0], g, mask, fwd.projections[0], n, removed_edge, nullptr);
  } else {
    std::vector<double> h1 =
        relayer_row(m.layers[0], g, mask, fwd.projections[0], n, removed_edge, nullptr);
    // Re-project the changed layer-1 row for the target side of layer 2.
    const std::size_t f = m.cfg.hidden;
    std::vector<std::vector<double>> tgt_override(m.layers[1].heads, std::vector<double>(f, 0.0));
    for (std::size_t k = 0; k < m.layers[1].heads; ++k) {
      const auto& w = m.layers[1].W[k].values();
      for (std::size_t i = 0; i < f; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < f; ++j) acc += w[i * f + j] * h1[j];
        tgt_override[k][i] = acc;
      }
    }
    h_final = relayer_row(m.layers[1], g, mask, fwd.projections[1], n, removed_edge, &tgt_override);
  }

  const std::size_t f = m.cfg.hidden, c = m.cfg.num_classes;
  std::vector<double> act(2 * f);
  const double* trunk_row = fwd.trunk.values().data() + n * f;
  for (std::size_t j = 0; j < f; ++j) {
    double x = trunk_row[j];
    act[j] = x >= 0.0 ? x : kMlpSlope * x;
    double y = h_final[j];
    act[f + j] = y >= 0.0 ? y : kMlpSlope * y;
  }
  std::vector<double> z(c);
  const auto& w2 = m.W2.values();
  for (std::size_t i = 0; i < c; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < 2 * f; ++j) acc += w2[i * 2 * f + j] * act[j];
    z[i] = acc + m.b2.values()[i];
  }
  double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& x : z) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : z) x /= sum;
  return z;
}

double per_node_cross_entropy(const std::vector<double>& row, int label) {
  return -std::log(std::max(row[label], kProbFloor));
}

double per_graph_binary_cross_entropy(double p, double target) {
  double pc = std::clamp(p, kProbFloor, 1.0 - kProbFloor);
  return -(target * std::log(pc) + (1.0 - target) * std::log(1.0 - pc));
}

double per_graph_squared_error(double pred, double target) {
  double d = pred - target;
  return d * d;
}

// ---- checkpoint io ----

namespace {
constexpr char kMagic[8] = {'C', 'A', 'R', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_checkpoint(const Model& m, const std::string& path) {
  json header;
  header["mechanism"] = mechanism_name(m.cfg.mechanism);
  header["task"] = task_name(m.cfg.task);
  header["layers"] = m.cfg.layers;
  header["heads"] = m.cfg.heads;
  header["hidden"] = m.cfg.hidden;
  header["in_dim"] = m.cfg.in_dim;
  header["num_classes"] = m.cfg.num_classes;
  header["embedding_categories"] = m.cfg.embedding_categories;
  json tensors = json::array();
  for (const Tensor& t : m.parameters())
    tensors.push_back({{"name", t.name()}, {"shape", t.shape()}});
  header["tensors"] = tensors;
  std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out.write(kMagic, 8);
  out.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
  std::uint64_t hl = hs.size();
  out.write(reinterpret_cast<const char*>(&hl), sizeof hl);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const Tensor& t : m.parameters())
    out.write(reinterpret_cast<const char*>(t.values().data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!out) throw DataError("failed writing checkpoint '" + path + "'");
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw DataError("'" + path + "' is not a checkpoint file");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (version != kVersion)
    throw DataError("checkpoint version " + std::to_string(version) + " unsupported");
  std::uint64_t hl = 0;
  in.read(reinterpret_cast<char*>(&hl), sizeof hl);
  std::string hs(hl, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hl));
  if (!in) throw DataError("truncated checkpoint header in '" + path + "'");
  json header = json::parse(hs, nullptr, /*allow_exceptions=*/false);
  if (header.is_discarded()) throw DataError("corrupt checkpoint header in '" + path + "'");

  ModelConfig cfg;
  cfg.mechanism = mechanism_from_string(header.at("mechanism").get<std::string>());
  cfg.task = task_from_string(header.at("task").get<std::string>());
  cfg.layers = header.at("layers").get<std::size_t>();
  cfg.heads = header.at("heads").get<std::size_t>();
  cfg.hidden = header.at("hidden").get<std::size_t>();
  cfg.in_dim = header.at("in_dim").get<std::size_t>();
  cfg.num_classes = header.at("num_classes").get<std::size_t>();
  cfg.embedding_categories = header.at("embedding_categories").get<std::size_t>();

  Model m = make_model(cfg, /*seed=*/0);
  auto params = m.parameters();
  const auto& tensors = header.at("tensors");
  if (tensors.size() != params.size())
    throw DataError("checkpoint lists " + std::to_string(tensors.size()) + " tensors, model has " +
                    std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Shape shape = tensors[i].at("shape").get<Shape>();
    if (shape != params[i].shape())
      throw DataError("checkpoint tensor '" + tensors[i].at("name").get<std::string>() +
                      "' has shape " + shape_str(shape) + ", model expects " +
                      shape_str(params[i].shape()));
    in.read(reinterpret_cast<char*>(params[i].values().data()),
            static_cast<std::streamsize>(params[i].size() * sizeof(double)));
  }
  if (!in) throw DataError("truncated checkpoint payload in '" + path + "'");
  return m;
}

}  // namespace car
