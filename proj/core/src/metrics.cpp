#include "car/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <boost/math/distributions/students_t.hpp>

namespace car {

std::optional<std::vector<double>> reference_attention(const Graph& g, const EdgeMask& mask,
                                                       std::uint32_t j) {
  std::vector<double> ref;
  double sum = 0.0;
  for (std::size_t e = g.in_offsets[j]; e < g.in_offsets[j + 1]; ++e) {
    if (!mask[e]) continue;
    double v = g.labels[g.src[e]] == g.labels[j] ? 1.0 : 0.0;
    ref.push_back(v);
    sum += v;
  }
  if (ref.empty() || sum == 0.0) return std::nullopt;
  for (double& v : ref) v /= sum;
  return ref;
}

double kl_divergence(const std::vector<double>& ref, const std::vector<double>& alpha) {
  if (ref.size() != alpha.size()) throw DataError("kl_divergence: length mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (ref[i] <= 0.0) continue;
    kl += ref[i] * std::log(ref[i] / std::max(alpha[i], kProbFloor));
  }
  return kl;
}

std::optional<double> mean_label_agreement_kl(const Model& m, const Graph& g,
                                              const std::vector<std::uint8_t>& node_mask) {
  NoGrad ng;
  EdgeMask mask = full_mask(g);
  ForwardResult fwd = node_forward(m, g, mask);
  if (fwd.alphas.empty()) throw DataError("mean_label_agreement_kl: model has no attention");
  const auto& alpha = fwd.alphas.back().values();
  double acc = 0.0;
  std::size_t eligible = 0;
  for (std::uint32_t j = 0; j < g.num_nodes; ++j) {
    if (!node_mask[j]) continue;
    auto ref = reference_attention(g, mask, j);
    if (!ref) continue;
    std::vector<double> aj;
    for (std::size_t e = g.in_offsets[j]; e < g.in_offsets[j + 1]; ++e) {
      int idx = fwd.active_index(static_cast<std::uint32_t>(e));
      if (idx >= 0) aj.push_back(alpha[idx]);
    }
    acc += kl_divergence(*ref, aj);
    ++eligible;
  }
  if (eligible == 0) return std::nullopt;
  return acc / static_cast<double>(eligible);
}

std::vector<AttentionDelta> attention_delta_report(const Model& a, const Model& b, const Graph& g,
                                                   std::size_t top_k) {
  NoGrad ng;
  EdgeMask mask = full_mask(g);
  ForwardResult fa = node_forward(a, g, mask);
  ForwardResult fb = node_forward(b, g, mask);
  if (fa.alphas.empty() || fb.alphas.empty())
    throw DataError("attention_delta_report: model has no attention");
  const auto& va = fa.alphas.back().values();
  const auto& vb = fb.alphas.back().values();
  std::vector<AttentionDelta> rows(g.num_edges());
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    AttentionDelta& r = rows[e];
    r.src = g.src[e];
    r.tgt = g.tgt[e];
    r.alpha_a = va[e];
    r.alpha_b = vb[e];
    double denom = r.alpha_a;
    if (denom < kProbFloor) {
      denom = kProbFloor;
      r.floored = true;
    }
    r.delta_pct = (r.alpha_b - r.alpha_a) / denom * 100.0;
  }
  std::sort(rows.begin(), rows.end(), [](const AttentionDelta& x, const AttentionDelta& y) {
    double ax = std::abs(x.delta_pct), ay = std::abs(y.delta_pct);
    if (ax != ay) return ax > ay;
    if (x.tgt != y.tgt) return x.tgt < y.tgt;
    return x.src < y.src;
  });
  if (top_k > 0 && rows.size() > top_k) rows.resize(top_k);
  return rows;
}

std::string format_delta_pct(double pct) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%+.2f", pct);
  std::string s(buf);
  if (s.size() > 3 && s.compare(s.size() - 3, 3, ".00") == 0) s.erase(s.size() - 3);
  return s + "%";
}

double wilcoxon_signed_rank_one_tailed(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DataError("wilcoxon: paired samples differ in length");
  if (a.empty()) throw DataError("wilcoxon: empty samples");
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double di = b[i] - a[i];  // alternative: b < a, so negative is favorable
    if (di != 0.0) d.push_back(di);
  }
  if (d.empty()) throw DataError("wilcoxon: all differences are zero");
  const std::size_t n = d.size();

  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(),
            [&d](std::size_t i, std::size_t j) { return std::abs(d[i]) < std::abs(d[j]); });
  std::vector<double> rank(n, 0.0);
  std::vector<std::size_t> tie_sizes;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && std::abs(d[idx[j]]) == std::abs(d[idx[i]])) ++j;
    double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) rank[idx[k]] = avg;
    tie_sizes.push_back(j - i);
    i = j;
  }
  double w_pos = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (d[i] > 0.0) w_pos += rank[i];

  if (n <= 12) {
    // Exact null: signs are independent fair coins given the observed ranks.
    const std::size_t total = std::size_t{1} << n;
    std::size_t count = 0;
    for (std::size_t bits = 0; bits < total; ++bits) {
      double w = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (bits & (std::size_t{1} << i)) w += rank[i];
      if (w <= w_pos + 1e-9) ++count;
    }
    return static_cast<double>(count) / static_cast<double>(total);
  }
  double nn = static_cast<double>(n);
  double mu = nn * (nn + 1.0) / 4.0;
  double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
  for (std::size_t t : tie_sizes) {
    double td = static_cast<double>(t);
    var -= (td * td * td - td) / 48.0;
  }
  if (var <= 0.0) throw DataError("wilcoxon: degenerate rank variance");
  double z = (w_pos - mu) / std::sqrt(var);
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

double welch_t_one_tailed(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() < 2 || y.size() < 2) throw DataError("welch_t: each sample needs >= 2 values");
  auto mean_var = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double e : v) m += e;
    m /= static_cast<double>(v.size());
    double s2 = 0.0;
    for (double e : v) s2 += (e - m) * (e - m);
    s2 /= static_cast<double>(v.size() - 1);
    return std::pair<double, double>(m, s2);
  };
  auto [mx, sx2] = mean_var(x);
  auto [my, sy2] = mean_var(y);
  double vx = sx2 / static_cast<double>(x.size());
  double vy = sy2 / static_cast<double>(y.size());
  double se2 = vx + vy;
  if (se2 <= 0.0) throw DataError("welch_t: both samples have zero variance");
  double t = (mx - my) / std::sqrt(se2);
  double df = se2 * se2 /
              (vx * vx / static_cast<double>(x.size() - 1) +
               vy * vy / static_cast<double>(y.size() - 1));
  boost::math::students_t dist(df);
  return boost::math::cdf(boost::math::complement(dist, t));
}

}  // namespace car
