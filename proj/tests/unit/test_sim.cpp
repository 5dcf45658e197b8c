#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "fedpsa/config.hpp"
#include "fedpsa/errors.hpp"
#include "fedpsa/sim.hpp"

using namespace fedpsa;

namespace {

RunConfig small_config(StrategyKind kind) {
  RunConfig c;
  c.strategy.kind = kind;
  c.dataset.n_classes = 4;
  c.dataset.in_dim = 4;
  c.dataset.per_class = 50;
  c.n_clients = 10;
  c.sketch_dim = 4;
  c.epochs = 1;
  c.batch_size = 16;
  c.calibration_size = 16;
  c.lr = 0.05;
  c.eval_interval = 1000;
  c.horizon_days = 3000.0 / static_cast<double>(kUnitsPerDay);
  return c;
}

std::vector<std::string> event_lines(const RunRecord& r) {
  std::vector<std::string> out;
  for (const auto& e : r.events) out.push_back(event_json(e).dump());
  return out;
}

}  // namespace

TEST_SUITE("sim") {
  TEST_CASE("virtual clock only moves forward") {
    VirtualClock c;
    c.advance_to(5);
    c.advance_to(5);
    CHECK(c.now() == 5);
    CHECK_THROWS_AS(c.advance_to(4), ContractError);
  }

  TEST_CASE("event queue pops by time then insertion order") {
    EventQueue q;
    q.push(10, EventKind::ClientFinish, 1);
    q.push(5, EventKind::EvalCheckpoint);
    q.push(10, EventKind::AdmitClients);
    q.push(10, EventKind::ClientFinish, 2);
    q.push(0, EventKind::AdmitClients);
    std::vector<std::pair<std::int64_t, EventKind>> order;
    std::vector<std::uint64_t> seqs;
    while (!q.empty()) {
      const auto e = q.pop();
      order.emplace_back(e.time, e.kind);
      seqs.push_back(e.sequence);
    }
    CHECK(seqs == std::vector<std::uint64_t>{4, 1, 0, 2, 3});
    CHECK(order[2].second == EventKind::ClientFinish);
  }

  TEST_CASE("latency sampling") {
    std::mt19937_64 rng(1);
    SUBCASE("degenerate range") {
      const LatencyModel m{LatencyKind::Uniform, 100, 100};
      for (int i = 0; i < 100; ++i) CHECK(m.sample(rng) == 100);
      const LatencyModel t{LatencyKind::LongTail, 100, 100};
      for (int i = 0; i < 100; ++i) CHECK(t.sample(rng) == 100);
    }
    SUBCASE("uniform 10-500 mean") {
      const LatencyModel m{LatencyKind::Uniform, 10, 500};
      double sum = 0.0;
      for (int i = 0; i < 100000; ++i) {
        const auto v = m.sample(rng);
        REQUIRE(v >= 10);
        REQUIRE(v <= 500);
        sum += static_cast<double>(v);
      }
      CHECK(std::abs(sum / 100000.0 - 255.0) < 0.02 * 255.0);
    }
    SUBCASE("long tail is right-skewed and clusters near lo") {
      const LatencyModel m{LatencyKind::LongTail, 10, 500};
      std::vector<std::int64_t> xs(100000);
      for (auto& x : xs) {
        x = m.sample(rng);
        REQUIRE(x >= 10);
        REQUIRE(x <= 500);
      }
      const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
      std::nth_element(xs.begin(), xs.begin() + 50000, xs.end());
      const auto median = xs[50000];
      CHECK(static_cast<double>(median) < mean);
      CHECK(median < 40);
    }
    SUBCASE("validation") {
      CHECK_THROWS_AS((LatencyModel{LatencyKind::Uniform, 0, 5}.validate()), ConfigError);
      CHECK_THROWS_AS((LatencyModel{LatencyKind::Uniform, 6, 5}.validate()), ConfigError);
      CHECK(parse_latency_kind("longtail") == LatencyKind::LongTail);
      CHECK_THROWS_AS(parse_latency_kind("pareto"), ConfigError);
    }
  }

  TEST_CASE("admission control") {
    std::vector<std::vector<std::size_t>> part(50, std::vector<std::size_t>{0});
    const LatencyModel lat{LatencyKind::Uniform, 10, 500};
    std::mt19937_64 rng(3);
    SUBCASE("50 clients at 20% start exactly 10") {
      ClientPool pool(part, 0.2, 1);
      CHECK(pool.cap() == 10);
      const auto started = admit_clients(pool, lat, 0, 0, rng);
      CHECK(started.size() == 10);
      CHECK(pool.in_flight() == 10);
      std::set<std::uint64_t> ids;
      for (const auto& s : started) {
        ids.insert(s.client_id);
        CHECK(s.finish_time >= 10);
        CHECK(s.finish_time <= 500);
      }
      CHECK(ids.size() == 10);
      CHECK(admit_clients(pool, lat, 0, 0, rng).empty());
    }
    SUBCASE("rate 1 starts every idle client") {
      ClientPool pool(part, 1.0, 1);
      CHECK(admit_clients(pool, lat, 0, 0, rng).size() == 50);
    }
    SUBCASE("cap arithmetic") {
      CHECK(concurrency_cap(0.2, 50) == 10);
      CHECK(concurrency_cap(0.3, 10) == 3);
      CHECK(concurrency_cap(0.21, 10) == 3);
      CHECK(concurrency_cap(0.01, 10) == 1);
    }
    SUBCASE("pool refuses to exceed its cap") {
      ClientPool pool(std::vector<std::vector<std::size_t>>(2, std::vector<std::size_t>{0}), 0.5, 1);
      pool.mark_training(0, 5, 0);
      CHECK_THROWS_AS(pool.mark_training(1, 5, 0), ContractError);
      CHECK_THROWS_AS(pool.mark_idle(1), ContractError);
    }
  }

  TEST_CASE("round duration is the straggler's latency") {
    CHECK(round_duration(std::vector<std::int64_t>{100, 400, 50}) == 400);
    CHECK(round_duration(std::vector<std::int64_t>{70, 70, 70}) == 70);
    CHECK(round_duration(std::vector<std::int64_t>{20, 30, 2500, 15}) == 2500);
    CHECK_THROWS_AS(round_duration(std::vector<std::int64_t>{}), ContractError);
  }

  TEST_CASE("horizon zero records only the initial evaluation") {
    auto c = small_config(StrategyKind::FedPsa);
    c.horizon_days = 0.0;
    const auto r = run_simulation(c);
    REQUIRE(r.curve.size() == 1);
    CHECK(r.curve[0].virtual_time == 0);
    CHECK(r.curve[0].version == 0);
    CHECK(r.events.empty());
  }

  TEST_CASE("single FedAsync client with constant latency uploads ten times in 1000 units") {
    auto c = small_config(StrategyKind::FedAsync);
    c.n_clients = 1;
    c.concurrency_rate = 1.0;
    c.latency = LatencyModel{LatencyKind::Uniform, 100, 100};
    c.horizon_days = 1000.0 / static_cast<double>(kUnitsPerDay);
    REQUIRE(c.horizon_units() == 1000);
    const auto r = run_simulation(c);
    CHECK(r.stats.uploads == 10);
    CHECK(r.events.size() == 10);
    CHECK(r.events.back().virtual_time == 1000);
  }

  TEST_CASE("same config twice gives identical records and traces") {
    for (auto kind : {StrategyKind::FedPsa, StrategyKind::FedAsync, StrategyKind::FedAvg, StrategyKind::FedPsaNoS}) {
      const auto c = small_config(kind);
      const auto data = load_dataset(c.dataset);
      std::vector<std::string> ta, tb;
      auto sink = [](std::vector<std::string>& out) {
        return [&out](const TraceEntry& e) {
          out.push_back(std::to_string(e.time) + "/" + std::to_string(static_cast<int>(e.kind)) + "/" +
                        std::to_string(e.client_id) + "/" + std::to_string(e.version));
        };
      };
      const auto a = run_simulation(c, data, sink(ta));
      const auto b = run_simulation(c, data, sink(tb));
      CHECK(ta == tb);
      CHECK(event_lines(a) == event_lines(b));
      CHECK(a.final_params == b.final_params);
      REQUIRE(a.curve.size() == b.curve.size());
      for (std::size_t i = 0; i < a.curve.size(); ++i) CHECK(a.curve[i].loss == b.curve[i].loss);
      CHECK(a.config_hash == b.config_hash);
    }
  }

  TEST_CASE("different seeds give different trajectories") {
    auto c = small_config(StrategyKind::FedBuff);
    const auto a = run_simulation(c);
    c.seed = 1;
    const auto b = run_simulation(c);
    CHECK_FALSE(a.final_params == b.final_params);
  }

  TEST_CASE("causality, cap and staleness over a full async run") {
    auto c = small_config(StrategyKind::FedPsa);
    c.n_clients = 50;
    c.dataset.per_class = 100;
    c.horizon_days = 4000.0 / static_cast<double>(kUnitsPerDay);
    std::int64_t last_time = 0;
    bool ordered = true;
    bool causal = true;
    const auto r = run_simulation(c, load_dataset(c.dataset), [&](const TraceEntry& e) {
      ordered = ordered && e.time >= last_time;
      last_time = e.time;
      if (e.kind == EventKind::ClientFinish) causal = causal && e.version >= e.origin_version;
    });
    CHECK(ordered);
    CHECK(causal);
    CHECK(r.stats.concurrency_cap == 10);
    CHECK(r.stats.max_in_flight == 10);
    const auto& h = r.stats.staleness_histogram;
    const auto stale = std::accumulate(h.begin() + std::min<std::size_t>(1, h.size()), h.end(), std::uint64_t{0});
    CHECK(stale > 0);
    for (const auto& e : r.events) {
      CHECK(e.client_ids.size() == 5);
      CHECK(std::abs(std::accumulate(e.weights.begin(), e.weights.end(), 0.0) - 1.0) < 1e-12);
    }
  }

  TEST_CASE("fedavg advances by whole rounds") {
    auto c = small_config(StrategyKind::FedAvg);
    c.latency = LatencyModel{LatencyKind::Uniform, 100, 100};
    c.horizon_days = 1000.0 / static_cast<double>(kUnitsPerDay);
    c.eval_interval = 250;
    const auto r = run_simulation(c);
    REQUIRE(r.events.size() == 10);
    for (std::size_t i = 0; i < r.events.size(); ++i) {
      CHECK(r.events[i].virtual_time == static_cast<std::int64_t>(100 * (i + 1)));
      CHECK(r.events[i].client_ids.size() == 2);
    }
    REQUIRE(r.curve.size() == 5);
    CHECK(r.curve[1].virtual_time == 250);
    CHECK(r.curve[1].version == 2);
    CHECK(r.curve[4].version == 9);
  }

  TEST_CASE("probe collects alignment samples for FedPSA") {
    auto c = small_config(StrategyKind::FedPsa);
    c.probe = true;
    c.probe_batch = 32;
    const auto r = run_simulation(c);
    CHECK(r.probe.size() == r.stats.uploads);
    for (const auto& p : r.probe) {
      CHECK(p.kappa >= -1.0);
      CHECK(p.kappa <= 1.0);
    }
  }

  TEST_CASE("enabling the probe does not change the trajectory") {
    auto c = small_config(StrategyKind::FedPsa);
    const auto data = load_dataset(c.dataset);
    const auto plain = run_simulation(c, data);
    c.probe = true;
    const auto probed = run_simulation(c, data);
    CHECK(plain.final_params == probed.final_params);
    CHECK(event_lines(plain) == event_lines(probed));
  }

  TEST_CASE("invalid configs are rejected before the run starts") {
    auto c = small_config(StrategyKind::FedPsa);
    c.sketch_dim = 1000;
    CHECK_THROWS_AS(run_simulation(c), ConfigError);
    c = small_config(StrategyKind::FedPsa);
    c.strategy.delta = 0.0;
    CHECK_THROWS_AS(run_simulation(c), ConfigError);
  }
}
