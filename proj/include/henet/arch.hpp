#pragma once

#include <array>
#include <string>
#include <vector>

#include "henet/tensor.hpp"

namespace henet {

enum class BlockKind { Stride1, Stride2 };

// Full parametrization of one building block. Stride-1 blocks run
// 1x1(Gm) -> shuffle(m) -> 3x3(Gn) and carry the add+concat skip connection;
// stride-2 blocks run 3x3/s2(Gm) -> shuffle(m) -> 1x1(Gn) with no skip.
struct BlockSpec {
  BlockKind kind = BlockKind::Stride1;
  Index in_channels = 0;
  Index mid_channels = 0;
  Index out_channels = 0;
  Index m = 0;  // groups of the first conv (and the shuffle)
  Index n = 0;  // groups of the second conv
  Index first_kernel = 1;
  Index second_kernel = 3;
  Index first_stride = 1;
  Index first_padding = 0;
  Index second_padding = 1;
};

// Stage layout for the full network. stage_channels[i] is the stride-1 block
// width of stage i+1; each stage ends in one stride-2 block. stage3_doubles
// controls whether the last regular stage's stride-2 block doubles its width
// (the default reproduces the published table, which keeps it).
struct NetworkConfig {
  Index input_size = 31;
  Index input_channels = 3;
  Index stem_channels = 24;
  std::vector<Index> stage_channels = {24, 48, 96};
  Index repeat = 3;
  Index final_channels = 192;
  Index num_classes = 10;
  bool stage3_doubles = false;

  void validate() const;
  std::string summary() const;
};

// Returns the default configuration with the given repeat count.
NetworkConfig default_config(Index repeat);

// Parses a line-oriented `key = value` config file. Recognized keys:
// input_size, stem_channels, stage_channels (comma list), repeat,
// final_channels, num_classes, stage3_doubles. Unknown keys are errors.
NetworkConfig parse_network_config(const std::string& path);

struct DivisorPair {
  Index m = 0;
  Index n = 0;
};

// The factorization c = m*n with m > n minimizing m-n; m == n is excluded.
DivisorPair nearest_divisor_pair(Index c);

// Stride-1 block of the given width: in = width, mid = width/2, out = width,
// (m, n) = nearest_divisor_pair(width).
BlockSpec make_stride1_block(Index width);

// Stride-2 block in_c -> out_c with mid = out_c/2. The group pair is keyed on
// mid when mid < in_c and on in_c otherwise; this reproduces every published
// group column, including the non-doubling stage-3 row.
BlockSpec make_stride2_block(Index in_c, Index out_c);

}  // namespace henet
