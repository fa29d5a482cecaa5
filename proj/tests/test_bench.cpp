#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "henet/analyze.hpp"
#include "henet/bench.hpp"

using namespace henet;

TEST_CASE("bench result structure and exact mean") {
  ModelGraph<float> g = build_henet<float>(default_config(1), 1);
  const BenchResult r = bench_forward(g, g.def.input, 5, 3, 7);
  CHECK(r.trials == 3);
  CHECK(r.runs == 5);
  CHECK(r.trial_seconds.size() == 3);
  CHECK(r.thread_count == 1);
  CHECK(r.warmup_runs == 10);  // max(10, runs/10)
  double mean = 0;
  for (double s : r.trial_seconds) {
    CHECK(s > 0.0);
    mean += s;
  }
  mean /= 3.0;
  CHECK(r.mean_seconds == mean);  // exactly the arithmetic mean
  CHECK(r.per_forward_us == doctest::Approx(mean / 5.0 * 1e6));
}

TEST_CASE("degenerate single-run single-trial bench is valid") {
  ModelGraph<float> g = build_henet<float>(default_config(1), 1);
  const BenchResult r = bench_forward(g, g.def.input, 1, 1, 7);
  CHECK(r.trial_seconds.size() == 1);
  CHECK(r.mean_seconds == r.trial_seconds[0]);
  CHECK_THROWS_AS(bench_forward(g, g.def.input, 0, 1, 7), BuildError);
  CHECK_THROWS_AS(bench_forward(g, Shape{1, 3, 32, 32}, 1, 1, 7), BuildError);
}

TEST_CASE("consecutive small benches land within 20% (warn only)") {
  ModelGraph<float> g = build_henet<float>(default_config(1), 1);
  const BenchResult a = bench_forward(g, g.def.input, 30, 1, 7);
  const BenchResult b = bench_forward(g, g.def.input, 30, 1, 7);
  const double rel = std::abs(a.mean_seconds - b.mean_seconds) /
                     std::max(a.mean_seconds, b.mean_seconds);
  WARN_MESSAGE(rel < 0.20, "timing variance between consecutive runs was ", rel * 100, "%");
}

TEST_CASE("odd/even experiment: MAC totals and resolution chains") {
  const OddEvenResult r = odd_even_experiment(default_config(1), 3, 1, 7);
  CHECK(r.macs_even > r.macs_odd);
  CHECK(r.odd.input.h == 31);
  CHECK(r.even.input.h == 32);
  const double expected_delta =
      (r.even.per_forward_us - r.odd.per_forward_us) / r.even.per_forward_us * 100.0;
  CHECK(r.percent_delta == doctest::Approx(expected_delta));

  // analyzer agrees with dedicated builds at both sizes
  NetworkConfig c31 = default_config(1);
  c31.input_size = 31;
  NetworkConfig c32 = default_config(1);
  c32.input_size = 32;
  CHECK(count_macs(build_henet_def(c31)) == r.macs_odd);
  CHECK(count_macs(build_henet_def(c32)) == r.macs_even);
}

TEST_CASE("bench kv output carries the thread count and trials") {
  ModelGraph<float> g = build_henet<float>(default_config(1), 1);
  const BenchResult r = bench_forward(g, g.def.input, 2, 2, 7);
  const std::string kv = format_bench(r, OutputFormat::Kv);
  CHECK(kv.find("bench.threads=1") != std::string::npos);
  CHECK(kv.find("bench.trial1.seconds=") != std::string::npos);
  CHECK(kv.find("bench.runs=2") != std::string::npos);
}
