#pragma once

#include <string>
#include <vector>

#include "henet/format.hpp"
#include "henet/graph.hpp"

namespace henet {

struct BenchResult {
  std::string model_id;
  Shape input;
  int runs = 0;
  int trials = 0;
  int warmup_runs = 0;
  std::vector<double> trial_seconds;
  double mean_seconds = 0.0;
  double per_forward_us = 0.0;
  int thread_count = 1;  // the timed region never spawns workers
  double sink = 0.0;     // score checksum, keeps the loop honest
};

// Times `runs` forward passes per trial on a fixed random batch-1 input,
// after runs/10 (min 10) untimed warmup passes. Wall-clock (monotonic).
BenchResult bench_forward(ModelGraph<float>& g, Shape input, int runs, int trials,
                          std::uint64_t seed = 1);

struct OddEvenResult {
  BenchResult odd, even;
  long long macs_odd = 0, macs_even = 0;
  double percent_delta = 0.0;  // speedup of the odd size relative to even
};

// Benches the same architecture at input sizes 31 (stride-2 padding 0
// throughout) and 32 (padding 1), with analyzer MAC totals for both.
OddEvenResult odd_even_experiment(const NetworkConfig& base, int runs, int trials,
                                  std::uint64_t seed = 1);

std::string format_bench(const BenchResult& r, OutputFormat fmt);
std::string format_odd_even(const OddEvenResult& r, OutputFormat fmt);

}  // namespace henet
