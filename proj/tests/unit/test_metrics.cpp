#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "../support/oracles.hpp"
#include "fedpsa/errors.hpp"
#include "fedpsa/metrics.hpp"

using namespace fedpsa;

namespace {

ParamVector pv(std::initializer_list<double> v) { return ParamVector(std::vector<double>(v)); }

std::vector<CurvePoint> curve_from(const std::vector<std::pair<double, double>>& day_acc) {
  std::vector<CurvePoint> c;
  for (const auto& [day, acc] : day_acc)
    c.push_back(CurvePoint{static_cast<std::int64_t>(std::llround(day * kUnitsPerDay)), 0, acc, 0.0});
  return c;
}

std::vector<AlignmentSample> noisy_samples(std::size_t n, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> k(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<AlignmentSample> out(n);
  for (auto& s : out) {
    s.kappa = k(rng);
    s.align = std::clamp(s.kappa + noise(rng), -1.0, 1.0);
  }
  return out;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("evaluate") {
    SUBCASE("constant prediction on a balanced 10-class set scores 0.1") {
      const auto spec = ModelSpec::linear(3, 10);
      ParamVector p(spec.param_count());
      p[30 + 4] = 5.0;  // bias of class 4
      const auto d = make_synthetic(10, 3, 20, 1);
      CHECK(evaluate(spec, p, d).accuracy == doctest::Approx(0.1));
    }
    SUBCASE("perfect model") {
      const auto spec = ModelSpec::linear(2, 2);
      Dataset d;
      d.n_classes = 2;
      d.samples = Batch{2, {1, 0, 0, 1, 2, 0, 0, 3}, {0, 1, 0, 1}};
      const ParamVector p({10, 0, 0, 10, 0, 0});
      CHECK(evaluate(spec, p, d).accuracy == 1.0);
    }
    SUBCASE("seed-17 fixture against the loop oracle") {
      const auto spec = ModelSpec::mlp(4, 8, 3);
      const auto p = oracle::random_params(spec, 17);
      Dataset d;
      d.n_classes = 3;
      d.samples = oracle::random_batch(4, 3, 40, 17);
      const auto [acc, loss] = oracle::evaluate_loop(spec, p, d.samples);
      const auto e = evaluate(spec, p, d);
      CHECK(e.accuracy == acc);
      CHECK(std::abs(e.loss - loss) < 1e-12);
    }
    SUBCASE("empty test set") {
      Dataset d;
      d.n_classes = 2;
      d.samples.in_dim = 2;
      CHECK_THROWS_AS(evaluate(ModelSpec::linear(2, 2), ParamVector(6), d), ContractError);
    }
  }

  TEST_CASE("aulc") {
    CHECK(aulc(curve_from({{0, 0.5}, {10, 0.5}})) == doctest::Approx(5.0));
    CHECK(aulc(curve_from({{0, 0.0}, {10, 1.0}})) == doctest::Approx(5.0));
    CHECK(aulc(curve_from({{0, 0.5}, {2.5, 0.5}, {5, 0.5}, {10, 0.5}})) == doctest::Approx(5.0));
    CHECK_THROWS_AS(aulc(curve_from({{0, 0.5}})), ContractError);
    CHECK_THROWS_AS(aulc(curve_from({{0, 0.5}, {0, 0.6}})), ContractError);
  }

  TEST_CASE("aulc is bounded and monotone under domination (property)") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
      const std::size_t n = 2 + rng() % 50;
      std::vector<CurvePoint> a, b;
      std::int64_t time = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double lo = u(rng);
        b.push_back(CurvePoint{time, 0, lo, 0});
        a.push_back(CurvePoint{time, 0, lo + (1.0 - lo) * u(rng), 0});
        time += 1 + static_cast<std::int64_t>(rng() % 20000);
      }
      const double days = static_cast<double>(a.back().virtual_time) / kUnitsPerDay;
      REQUIRE(aulc(a) >= aulc(b));
      REQUIRE(aulc(a) <= days + 1e-12);
      REQUIRE(aulc(b) >= 0.0);
    }
  }

  TEST_CASE("reference AULC magnitudes are accuracy-days over a 10-day horizon") {
    // A curve holding 0.5859 for 10 days integrates to the 5.859 scale of published tables.
    CHECK(aulc(curve_from({{0, 0.5859}, {10, 0.5859}})) == doctest::Approx(5.859));
    CHECK(aulc(curve_from({{0, 0.5255}, {10, 0.5255}})) == doctest::Approx(5.255));
  }

  TEST_CASE("alignment probe") {
    const auto spec = ModelSpec::mlp(4, 6, 3);
    const auto server = oracle::random_params(spec, 2);
    const auto batch = oracle::random_batch(4, 3, 32, 3);
    SUBCASE("identical params align perfectly") {
      const auto s = alignment_probe(spec, server, server, 0.4, batch, 77);
      CHECK(s.align == doctest::Approx(1.0));
      CHECK(s.kappa == 0.4);
      CHECK(s.virtual_time == 77);
    }
    SUBCASE("a tiny descent step stays aligned") {
      auto client = server;
      client.axpy(-1e-6, gradient(spec, server, batch));
      CHECK(alignment_probe(spec, server, client, 0.0, batch, 0).align > 0.99);
    }
  }

  TEST_CASE("pearson and spearman") {
    const std::vector<double> x = {1, 2, 3, 4, 5};
    const std::vector<double> y = {2, 4, 6, 8, 10};
    CHECK(*pearson(x, y) == doctest::Approx(1.0));
    CHECK(*spearman(x, y) == doctest::Approx(1.0));
    const std::vector<double> flat = {3, 3, 3, 3, 3};
    CHECK_FALSE(pearson(x, flat).has_value());
    CHECK_FALSE(spearman(x, flat).has_value());
    CHECK_FALSE(pearson(std::vector<double>{1}, std::vector<double>{1}).has_value());
    // Ties share the mean rank: ranks of y are {1, 2.5, 2.5, 4}.
    const std::vector<double> a = {1, 2, 3, 4};
    const std::vector<double> b = {10, 20, 20, 30};
    CHECK(*spearman(a, b) == doctest::Approx(0.9486832980505138));
  }

  TEST_CASE("correlations lie in [-1, 1] and spearman ignores monotone transforms (property)") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n;
    for (int t = 0; t < 100; ++t) {
      std::vector<double> x(3 + rng() % 40), y(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = n(rng);
        y[i] = 0.5 * x[i] + n(rng);
      }
      const auto p = pearson(x, y);
      const auto s = spearman(x, y);
      REQUIRE(p.has_value());
      REQUIRE(std::abs(*p) <= 1.0);
      REQUIRE(std::abs(*s) <= 1.0);
      std::vector<double> tx(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) tx[i] = std::exp(2.0 * x[i]);
      REQUIRE(std::abs(*spearman(tx, y) - *s) < 1e-12);
    }
  }

  TEST_CASE("binned correlation") {
    SUBCASE("align equal to kappa correlates perfectly everywhere") {
      std::vector<AlignmentSample> s;
      for (int i = 0; i < 40; ++i) {
        const double k = -0.975 + 0.05 * i;
        s.push_back({k, k, 0});
      }
      const auto r = binned_correlation(s, 0.1);
      CHECK(*r.pearson_raw == doctest::Approx(1.0));
      CHECK(*r.spearman_raw == doctest::Approx(1.0));
      CHECK(*r.pearson_binned == doctest::Approx(1.0));
      CHECK(*r.spearman_binned == doctest::Approx(1.0));
      CHECK(r.bins.size() == 20);
      CHECK(r.bins.front().kappa_mid == doctest::Approx(-0.95));
      CHECK(r.bins.front().count == 2);
    }
    SUBCASE("constant align has undefined correlation") {
      std::vector<AlignmentSample> s;
      for (int i = 0; i < 12; ++i) s.push_back({-1.0 + 0.15 * i, 0.3, 0});
      const auto r = binned_correlation(s, 0.1);
      CHECK_FALSE(r.pearson_raw.has_value());
      CHECK_FALSE(r.pearson_binned.has_value());
    }
    SUBCASE("one occupied bin leaves binned correlations null") {
      std::vector<AlignmentSample> s;
      for (int i = 0; i < 12; ++i) s.push_back({0.51 + 0.001 * i, 0.1 * i, 0});
      const auto r = binned_correlation(s, 0.1);
      CHECK(r.bins.size() == 1);
      CHECK_FALSE(r.pearson_binned.has_value());
      CHECK_FALSE(r.spearman_binned.has_value());
    }
    SUBCASE("kappa = 1 lands in the last bin and empty bins are dropped") {
      std::vector<AlignmentSample> s(10, AlignmentSample{1.0, 0.5, 0});
      s[0].kappa = -1.0;
      const auto r = binned_correlation(s, 0.1);
      REQUIRE(r.bins.size() == 2);
      CHECK(r.bins.back().kappa_mid == doctest::Approx(0.95));
      CHECK(r.bins.back().count == 9);
    }
    SUBCASE("too few samples") {
      CHECK_THROWS_AS(binned_correlation(std::vector<AlignmentSample>(9), 0.1), ContractError);
      CHECK_THROWS_AS(binned_correlation(std::vector<AlignmentSample>(10), 0.0), ContractError);
    }
  }

  TEST_CASE("binning lifts correlation of noisy samples") {
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto r = binned_correlation(noisy_samples(1000, 0.5, seed), 0.1);
      if (*r.pearson_binned > *r.pearson_raw) ++wins;
    }
    CHECK(wins >= 95);
  }

  TEST_CASE("comparison tables") {
    const auto c = curve_from({{0, 0.1}, {1, 0.5}});
    const RunKey k1{"fedpsa", "synthetic", 0.1, "uniform(10-500)", 0};
    RunKey k2 = k1;
    k2.seed = 1;
    auto s1 = summarize(k1, c);
    CHECK(s1.final_accuracy == 0.5);
    CHECK(s1.aulc == doctest::Approx(0.3));

    const std::vector<RunSummary> one = {s1};
    const auto rows1 = compare_runs(one);
    REQUIRE(rows1.size() == 1);
    CHECK(rows1[0].runs == 1);
    CHECK(rows1[0].final_accuracy_std == 0.0);

    auto s2 = summarize(k2, curve_from({{0, 0.1}, {1, 0.7}}));
    const std::vector<RunSummary> two = {s1, s2};
    const auto rows2 = compare_runs(two);
    REQUIRE(rows2.size() == 1);
    CHECK(rows2[0].runs == 2);
    CHECK(rows2[0].final_accuracy_mean == doctest::Approx(0.6));
    CHECK(rows2[0].final_accuracy_std == doctest::Approx(std::sqrt(0.02)));

    const auto csv = summary_csv(two);
    CHECK(csv.rfind(std::string(kSummaryCsvHeader) + "\n", 0) == 0);
    CHECK(csv.find("fedpsa,synthetic,0.1,uniform(10-500),1,0.7,") != std::string::npos);
    CHECK(comparison_csv(rows2).rfind(std::string(kComparisonCsvHeader) + "\n", 0) == 0);
    CHECK(std::string(kComparisonCsvHeader) ==
          "strategy,dataset,alpha,latency_kind,runs,final_accuracy_mean,final_accuracy_std,aulc_mean,aulc_std");
  }
}
