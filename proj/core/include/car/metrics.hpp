#pragma once
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "car/graph.hpp"
#include "car/model.hpp"

namespace car {

// Label-agreement reference weights over j's active in-edges: the indicator
// of source/target label equality, normalized to sum 1. Nodes whose
// in-neighborhood contains no same-label source have no reference
// distribution (nullopt); so do nodes without active in-edges.
std::optional<std::vector<double>> reference_attention(const Graph& g, const EdgeMask& mask,
                                                       std::uint32_t j);

// Mean over eligible masked nodes of KL(reference || alpha_j), where
// alpha_j is the model's final-layer attention restricted to j's in-edges,
// floored at 1e-12 inside the log. Returns nullopt if no node is eligible.
std::optional<double> mean_label_agreement_kl(const Model& m, const Graph& g,
                                              const std::vector<std::uint8_t>& node_mask);

double kl_divergence(const std::vector<double>& ref, const std::vector<double>& alpha);

struct AttentionDelta {
  std::uint32_t src = 0, tgt = 0;
  double alpha_a = 0.0, alpha_b = 0.0;
  double delta_pct = 0.0;  // (b - a) / a * 100, a floored at 1e-12
  bool floored = false;    // a hit the floor; the ratio is unreliable
};

// Per-edge attention change between two models of the same shape, sorted by
// |delta_pct| descending; top_k == 0 keeps every edge.
std::vector<AttentionDelta> attention_delta_report(const Model& a, const Model& b, const Graph& g,
                                                   std::size_t top_k);

std::string format_delta_pct(double pct);

// One-tailed paired Wilcoxon signed-rank test of "b < a". Zero differences
// are dropped; ties share average ranks. Exact null enumeration for n <= 12
// after drops, tie-corrected normal approximation above. Errors when every
// difference is zero.
double wilcoxon_signed_rank_one_tailed(const std::vector<double>& a, const std::vector<double>& b);

// One-tailed Welch's t-test of mean(x) > mean(y) with Welch-Satterthwaite
// degrees of freedom. Each sample needs >= 2 values; errors when both
// variances are zero.
double welch_t_one_tailed(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace car
