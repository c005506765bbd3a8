#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "car/metrics.hpp"
#include "car/train.hpp"

using namespace car;

namespace {

// Independent exact Wilcoxon: average ranks of |d|, W+ = sum over d > 0,
// p = P(W' <= W+) under uniform signs, enumerated over all 2^n sign flips.
double wilcoxon_oracle(std::vector<double> a, const std::vector<double>& b) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (b[i] - a[i] != 0.0) d.push_back(b[i] - a[i]);
  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return std::fabs(d[x]) < std::fabs(d[y]); });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && std::fabs(d[order[j]]) == std::fabs(d[order[i]])) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) rank[order[k]] = avg;
    i = j;
  }
  double w_pos = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (d[i] > 0.0) w_pos += rank[i];
  std::size_t hits = 0;
  const std::size_t total = std::size_t{1} << n;
  for (std::size_t bits = 0; bits < total; ++bits) {
    double w = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (bits >> i & 1) w += rank[i];
    if (w <= w_pos + 1e-9) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

Model uniform_model(std::size_t classes) {
  ModelConfig cfg;
  cfg.in_dim = 2;
  cfg.hidden = 3;
  cfg.num_classes = classes;
  Model m = make_model(cfg, 0);
  for (auto& p : m.parameters())
    std::fill(p.values().begin(), p.values().end(), 0.0);
  return m;
}

Graph featureless(std::size_t n, std::vector<std::pair<std::uint32_t, std::uint32_t>> edges,
                  std::vector<int> labels, std::size_t classes) {
  Graph g = build_graph(n, edges, true);
  g.feature_dim = 2;
  g.features.assign(2 * n, 0.5);
  g.labels = std::move(labels);
  g.num_classes = classes;
  g.train_mask.assign(n, 1);
  g.val_mask.assign(n, 0);
  g.test_mask.assign(n, 0);
  return g;
}

}  // namespace

TEST_CASE("accuracy with argmax ties resolving to the lowest class") {
  // all-zero parameters predict uniform rows, so every argmax is class 0
  Graph g = featureless(4, {{0, 1}, {1, 2}, {2, 3}}, {0, 0, 0, 1}, 2);
  Model m = uniform_model(2);
  EvalStats s = evaluate(m, g, g.train_mask);
  CHECK(s.accuracy == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(s.loss == doctest::Approx(0.69314718055994529).epsilon(1e-9));

  Graph h = featureless(3, {{0, 1}}, {0, 0, 0}, 2);
  CHECK(evaluate(m, h, h.train_mask).accuracy == 1.0);
}

TEST_CASE("reference attention follows label agreement") {
  Graph g = featureless(4, {{0, 3}, {1, 3}, {2, 3}}, {1, 1, 0, 1}, 2);
  auto ref = reference_attention(g, full_mask(g), 3);
  REQUIRE(ref.has_value());
  REQUIRE(ref->size() == 3);
  CHECK((*ref)[0] == 0.5);
  CHECK((*ref)[1] == 0.5);
  CHECK((*ref)[2] == 0.0);

  Graph same = featureless(5, {{0, 4}, {1, 4}, {2, 4}, {3, 4}}, {0, 0, 0, 0, 0}, 2);
  auto quarters = reference_attention(same, full_mask(same), 4);
  REQUIRE(quarters.has_value());
  for (double v : *quarters) CHECK(v == 0.25);

  Graph none = featureless(3, {{0, 2}, {1, 2}}, {0, 0, 1}, 2);
  CHECK(!reference_attention(none, full_mask(none), 2).has_value());
  CHECK(!reference_attention(none, full_mask(none), 0).has_value());  // no in-edges
}

TEST_CASE("divergence at fixed points") {
  CHECK(kl_divergence({0.25, 0.75}, {0.25, 0.75}) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(kl_divergence({1.0, 0.0}, {0.5, 0.5}) ==
        doctest::Approx(0.69314718055994529).epsilon(1e-12));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p(4), q(4);
    double sp = 0, sq = 0;
    for (int i = 0; i < 4; ++i) {
      p[i] = u(rng);
      q[i] = u(rng);
      sp += p[i];
      sq += q[i];
    }
    for (int i = 0; i < 4; ++i) {
      p[i] /= sp;
      q[i] /= sq;
    }
    CHECK(kl_divergence(p, q) >= -1e-12);
  }
}

TEST_CASE("mean divergence skips graphs with no eligible node") {
  // no in-neighbor ever shares the target's label
  Graph g = featureless(2, {{0, 1}, {1, 0}}, {0, 1}, 2);
  ModelConfig cfg;
  cfg.in_dim = 2;
  cfg.hidden = 3;
  cfg.num_classes = 2;
  Model m = make_model(cfg, 1);
  CHECK(!mean_label_agreement_kl(m, g, g.train_mask).has_value());

  Graph h = featureless(2, {{0, 1}, {1, 0}}, {0, 0}, 2);
  auto v = mean_label_agreement_kl(m, h, h.train_mask);
  REQUIRE(v.has_value());
  // singleton in-edge: alpha and reference are both the point mass
  CHECK(*v == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("signed-rank test at hand-enumerable points") {
  SUBCASE("five uniform wins") {
    CHECK(wilcoxon_signed_rank_one_tailed({1, 2, 3, 4, 5}, {0, 1, 2, 3, 4}) ==
          doctest::Approx(1.0 / 32.0).epsilon(1e-12));
  }
  SUBCASE("perfectly symmetric differences") {
    CHECK(wilcoxon_signed_rank_one_tailed({0, 0, 0, 0, 0, 0}, {1, -1, 2, -2, 3, -3}) ==
          doctest::Approx(0.5625).epsilon(1e-12));
  }
  SUBCASE("all-zero differences error") {
    CHECK_THROWS_AS(wilcoxon_signed_rank_one_tailed({1, 2}, {1, 2}), DataError);
  }
  SUBCASE("zero differences are dropped first") {
    const double with_zeros = wilcoxon_signed_rank_one_tailed({1, 2, 5, 5}, {0, 1, 5, 5});
    const double without = wilcoxon_signed_rank_one_tailed({1, 2}, {0, 1});
    CHECK(with_zeros == doctest::Approx(without).epsilon(1e-12));
  }
}

TEST_CASE("signed-rank test matches brute-force enumeration") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> len(1, 10), val(-4, 4);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = len(rng);
    std::vector<double> a(n), b(n);
    bool any = false;
    for (int i = 0; i < n; ++i) {
      a[i] = val(rng);
      b[i] = val(rng);
      any = any || a[i] != b[i];
    }
    if (!any) continue;
    CHECK(wilcoxon_signed_rank_one_tailed(a, b) ==
          doctest::Approx(wilcoxon_oracle(a, b)).epsilon(1e-10));
  }
}

TEST_CASE("large samples switch to the normal approximation smoothly") {
  // n = 20 forced one-sided: p should be tiny but positive
  std::vector<double> a(20), b(20);
  for (int i = 0; i < 20; ++i) {
    a[i] = i + 1.0;
    b[i] = a[i] - 0.5 - i * 0.01;
  }
  const double p = wilcoxon_signed_rank_one_tailed(a, b);
  CHECK(p > 0.0);
  CHECK(p < 1e-3);
}

TEST_CASE("mean-difference test at fixed points") {
  std::vector<double> y(10);
  for (int i = 0; i < 10; ++i) y[i] = i;
  SUBCASE("identical samples sit at one half") {
    CHECK(welch_t_one_tailed(y, y) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("a ten-sigma shift is decisive and antisymmetric") {
    const double sd = std::sqrt(55.0 / 6.0);  // sample sd of 0..9
    std::vector<double> x(10);
    for (int i = 0; i < 10; ++i) x[i] = y[i] + 10.0 * sd;
    const double p = welch_t_one_tailed(x, y);
    CHECK(p < 1e-6);
    CHECK(welch_t_one_tailed(y, x) == doctest::Approx(1.0 - p).epsilon(1e-9));
  }
  SUBCASE("two constant samples error") {
    CHECK_THROWS_AS(welch_t_one_tailed({3, 3, 3}, {1, 1, 1}), DataError);
  }
}

TEST_CASE("percent formatting rounds only when it must") {
  CHECK(format_delta_pct(-90.0) == "-90%");
  CHECK(format_delta_pct(7700.0) == "+7700%");
  CHECK(format_delta_pct(-89.8) == "-89.80%");
  CHECK(format_delta_pct(0.0) == "+0%");
}

TEST_CASE("attention change report") {
  std::mt19937_64 rng(11);
  Graph g = featureless(6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 0}, {0, 3}},
                        {0, 1, 0, 1, 0, 1}, 2);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (auto& v : g.features) v = dist(rng);
  ModelConfig cfg;
  cfg.in_dim = 2;
  cfg.hidden = 4;
  cfg.num_classes = 2;
  Model a = make_model(cfg, 5);

  SUBCASE("a model against itself reports all zeros") {
    auto rows = attention_delta_report(a, a, g, 0);
    CHECK(rows.size() == g.num_edges());
    for (const auto& r : rows) {
      CHECK(r.delta_pct == 0.0);
      CHECK(r.alpha_a == r.alpha_b);
      CHECK(!r.floored);
    }
  }
  SUBCASE("rows come sorted by absolute percent change") {
    Model b = make_model(cfg, 6);
    auto rows = attention_delta_report(a, b, g, 0);
    REQUIRE(rows.size() == g.num_edges());
    for (std::size_t i = 1; i < rows.size(); ++i)
      CHECK(std::fabs(rows[i - 1].delta_pct) >= std::fabs(rows[i].delta_pct));
    auto top = attention_delta_report(a, b, g, 3);
    REQUIRE(top.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(top[i].delta_pct == rows[i].delta_pct);
  }
}
