#include <cmath>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>

#include "commands.hpp"
#include "fedpsa/config.hpp"
#include "fedpsa/run_io.hpp"
#include "fedpsa/sensitivity.hpp"
#include "fedpsa/sim.hpp"
#include "fedpsa/strategy.hpp"

namespace fedpsa::cli {

namespace {

Batch random_batch(std::size_t in_dim, std::size_t n_classes, std::size_t size, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Batch b;
  b.in_dim = in_dim;
  for (std::size_t i = 0; i < size * in_dim; ++i) b.inputs.push_back(normal(rng));
  for (std::size_t i = 0; i < size; ++i) b.labels.push_back(static_cast<int>(rng() % n_classes));
  return b;
}

bool gradient_matches_finite_differences() {
  std::mt19937_64 rng(1);
  for (const auto& spec : {ModelSpec::linear(5, 3), ModelSpec::mlp(5, 7, 3)}) {
    const auto batch = random_batch(5, 3, 8, rng);
    ParamVector p = init_params(spec, rng());
    const auto g = gradient(spec, p, batch);
    double worst = 0.0;
    for (std::size_t i = 0; i < p.dim(); i += 3) {
      const double h = 1e-5;
      ParamVector up = p, down = p;
      up[i] += h;
      down[i] -= h;
      const double fd = (forward_loss(spec, up, batch) - forward_loss(spec, down, batch)) / (2 * h);
      worst = std::max(worst, std::abs(fd - g[i]));
    }
    if (worst > 1e-5) return false;
  }
  return true;
}

bool sensitivity_is_nonnegative_and_zero_at_zero() {
  std::mt19937_64 rng(2);
  const auto spec = ModelSpec::mlp(4, 6, 3);
  ParamVector p = init_params(spec, 3);
  p[0] = 0.0;
  const auto s = sensitivity_second_order(spec, p, random_batch(4, 3, 16, rng));
  if (s.values[0] != 0.0) return false;
  for (double v : s.values)
    if (!(v >= 0.0) || !std::isfinite(v)) return false;
  return true;
}

bool sketch_is_linear() {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  const auto r = ProjectionMatrix::gaussian(4, 8, 64);
  std::vector<double> x(64), y(64), z(64);
  for (std::size_t i = 0; i < 64; ++i) {
    x[i] = normal(rng);
    y[i] = normal(rng);
    z[i] = 2.0 * x[i] - 0.5 * y[i];
  }
  const auto sx = r.project(x), sy = r.project(y), sz = r.project(z);
  for (std::size_t j = 0; j < 8; ++j)
    if (std::abs(sz.values[j] - (2.0 * sx.values[j] - 0.5 * sy.values[j])) > 1e-10) return false;
  return true;
}

bool softmax_is_a_simplex() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> k(1 + rng() % 8);
    for (double& v : k) v = u(rng);
    const auto w = softmax_weights(k, 0.05 + std::abs(u(rng)) * 10);
    if (std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0) > 1e-12) return false;
  }
  return true;
}

bool temperature_arithmetic() {
  ThermometerQueue q(2, 5.0, 0.5);
  q.push(3.0);
  q.push(3.0);
  return q.temperature() && *q.temperature() == 5.5;
}

RunConfig tiny_run() {
  RunConfig c;
  c.dataset.per_class = 30;
  c.n_clients = 10;
  c.epochs = 1;
  c.horizon_days = 0.02;
  c.eval_interval = 500;
  return c;
}

bool runs_are_deterministic() {
  const auto c = tiny_run();
  const auto a = run_simulation(c);
  const auto b = run_simulation(c);
  return curve_csv(a.curve) == curve_csv(b.curve) && events_jsonl(a.events) == events_jsonl(b.events);
}

bool disabled_thermometer_matches_fedbuff() {
  auto c = tiny_run();
  c.strategy.kind = StrategyKind::FedBuff;
  const auto buff = run_simulation(c);
  c.strategy.kind = StrategyKind::FedPsa;
  c.strategy.thermometer_enabled = false;
  return run_simulation(c).final_params == buff.final_params;
}

bool config_round_trips() {
  RunConfig c = tiny_run();
  c.strategy.kind = StrategyKind::FedPsaNoT;
  c.latency.kind = LatencyKind::LongTail;
  const auto back = validate_config(emit_config(c));
  return back.ok() && *back.config == c;
}

}  // namespace

int cmd_selftest() {
  const std::vector<std::pair<const char*, std::function<bool()>>> checks = {
      {"gradient matches central finite differences", gradient_matches_finite_differences},
      {"sensitivity nonnegative and zero for zero parameters", sensitivity_is_nonnegative_and_zero_at_zero},
      {"sketch is linear", sketch_is_linear},
      {"softmax weights sum to one", softmax_is_a_simplex},
      {"temperature at M_cur = M0 is gamma + delta", temperature_arithmetic},
      {"config emit/validate round-trip", config_round_trips},
      {"identical runs are byte-identical", runs_are_deterministic},
      {"FedPSA without thermometer reproduces FedBuff", disabled_thermometer_matches_fedbuff},
  };
  int failed = 0;
  for (const auto& [name, check] : checks) {
    bool ok = false;
    try {
      ok = check();
    } catch (const std::exception& e) {
      std::cout << "  (" << e.what() << ")\n";
    }
    std::cout << (ok ? "PASS " : "FAIL ") << name << '\n';
    failed += ok ? 0 : 1;
  }
  std::cout << (checks.size() - static_cast<std::size_t>(failed)) << "/" << checks.size() << " checks passed\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace fedpsa::cli
