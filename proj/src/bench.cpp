#include "henet/bench.hpp"

#include <chrono>
#include <sstream>

#include "henet/analyze.hpp"

namespace henet {

BenchResult bench_forward(ModelGraph<float>& g, Shape input, int runs, int trials,
                          std::uint64_t seed) {
  if (runs < 1 || trials < 1) throw BuildError("bench: runs and trials must be >= 1");
  if (input.c != g.def.input.c || input.h != g.def.input.h || input.w != g.def.input.w)
    throw BuildError("bench: input " + input.str() + " does not match graph input " +
                     g.def.input.str());

  BenchResult r;
  r.model_id = g.def.id();
  r.input = input;
  r.runs = runs;
  r.trials = trials;
  r.warmup_runs = std::max(10, runs / 10);
  r.thread_count = 1;

  Tensor<float> x(input);
  Rng rng(seed);
  fill_uniform(x, rng, -1.0, 1.0);

  double sink = 0.0;
  for (int i = 0; i < r.warmup_runs; ++i) {
    const Tensor<float> scores = forward_model(g, x, Mode::Infer);
    sink += static_cast<double>(scores[0]);
  }

  using clock = std::chrono::steady_clock;
  for (int t = 0; t < trials; ++t) {
    const auto t0 = clock::now();
    for (int i = 0; i < runs; ++i) {
      const Tensor<float> scores = forward_model(g, x, Mode::Infer);
      sink += static_cast<double>(scores[0]);
    }
    const auto t1 = clock::now();
    r.trial_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  double total = 0.0;
  for (double s : r.trial_seconds) total += s;
  r.mean_seconds = total / static_cast<double>(trials);
  r.per_forward_us = r.mean_seconds / static_cast<double>(runs) * 1e6;
  r.sink = sink;
  return r;
}

OddEvenResult odd_even_experiment(const NetworkConfig& base, int runs, int trials,
                                  std::uint64_t seed) {
  NetworkConfig odd_cfg = base;
  odd_cfg.input_size = 31;
  NetworkConfig even_cfg = base;
  even_cfg.input_size = 32;

  OddEvenResult r;
  {
    ModelGraph<float> g = build_henet<float>(odd_cfg, seed);
    r.macs_odd = count_macs(g.def);
    r.odd = bench_forward(g, g.def.input, runs, trials, seed);
  }
  {
    ModelGraph<float> g = build_henet<float>(even_cfg, seed);
    r.macs_even = count_macs(g.def);
    r.even = bench_forward(g, g.def.input, runs, trials, seed);
  }
  r.percent_delta =
      (r.even.per_forward_us - r.odd.per_forward_us) / r.even.per_forward_us * 100.0;
  return r;
}

std::string format_bench(const BenchResult& r, OutputFormat fmt) {
  std::ostringstream out;
  if (fmt == OutputFormat::Kv) {
    out << "bench.model=" << r.model_id << "\n";
    out << "bench.input=" << r.input.n << "x" << r.input.c << "x" << r.input.h << "x"
        << r.input.w << "\n";
    out << "bench.runs=" << r.runs << "\n";
    out << "bench.trials=" << r.trials << "\n";
    out << "bench.warmup_runs=" << r.warmup_runs << "\n";
    out << "bench.threads=" << r.thread_count << "\n";
    for (std::size_t t = 0; t < r.trial_seconds.size(); ++t)
      out << "bench.trial" << t << ".seconds=" << fmt_double(r.trial_seconds[t], 6) << "\n";
    out << "bench.mean_seconds=" << fmt_double(r.mean_seconds, 6) << "\n";
    out << "bench.per_forward_us=" << fmt_double(r.per_forward_us, 3) << "\n";
    return out.str();
  }
  out << "model " << r.model_id << "  input " << r.input.str() << "  runs " << r.runs
      << " x " << r.trials << " trials (warmup " << r.warmup_runs << ", 1 thread)\n";
  for (std::size_t t = 0; t < r.trial_seconds.size(); ++t)
    out << "  trial " << t << ": " << fmt_double(r.trial_seconds[t], 4) << " s\n";
  out << "  mean " << fmt_double(r.mean_seconds, 4) << " s  ("
      << fmt_double(r.per_forward_us, 1) << " us/forward)\n";
  return out.str();
}

std::string format_odd_even(const OddEvenResult& r, OutputFormat fmt) {
  std::ostringstream out;
  if (fmt == OutputFormat::Kv) {
    out << "oddeven.size31.per_forward_us=" << fmt_double(r.odd.per_forward_us, 3) << "\n";
    out << "oddeven.size32.per_forward_us=" << fmt_double(r.even.per_forward_us, 3) << "\n";
    out << "oddeven.size31.macs=" << r.macs_odd << "\n";
    out << "oddeven.size32.macs=" << r.macs_even << "\n";
    out << "oddeven.delta_percent=" << fmt_double(r.percent_delta, 2) << "\n";
    return out.str();
  }
  out << "odd/even input experiment (" << r.odd.model_id << ")\n";
  out << "  31x31: " << fmt_double(r.odd.per_forward_us, 1) << " us/forward, " << r.macs_odd
      << " MACs\n";
  out << "  32x32: " << fmt_double(r.even.per_forward_us, 1) << " us/forward, " << r.macs_even
      << " MACs\n";
  out << "  odd-size speedup: " << fmt_double(r.percent_delta, 2) << "% (informational)\n";
  return out.str();
}

}  // namespace henet
