#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <set>

#include "henet/graph.hpp"
#include "test_util.hpp"

using namespace henet;

TEST_CASE("nearest divisor pair: published widths and edge cases") {
  CHECK(nearest_divisor_pair(24).m == 6);
  CHECK(nearest_divisor_pair(24).n == 4);
  CHECK(nearest_divisor_pair(48).m == 8);
  CHECK(nearest_divisor_pair(48).n == 6);
  CHECK(nearest_divisor_pair(96).m == 12);
  CHECK(nearest_divisor_pair(96).n == 8);
  CHECK(nearest_divisor_pair(7).m == 7);
  CHECK(nearest_divisor_pair(7).n == 1);
  // 36 = 6*6 is excluded by the strict inequality
  CHECK(nearest_divisor_pair(36).m == 9);
  CHECK(nearest_divisor_pair(36).n == 4);
  CHECK_THROWS_AS(nearest_divisor_pair(1), BuildError);
  CHECK_THROWS_AS(nearest_divisor_pair(0), BuildError);
}

TEST_CASE("nearest divisor pair: exhaustive factorization property") {
  for (Index c = 2; c <= 10000; ++c) {
    const DivisorPair p = nearest_divisor_pair(c);
    CHECK(p.m * p.n == c);
    CHECK(p.m > p.n);
    CHECK(p.n >= 1);
  }
}

TEST_CASE("nearest divisor pair: gap is minimal (enumeration oracle)") {
  for (Index c = 2; c <= 512; ++c) {
    const DivisorPair p = nearest_divisor_pair(c);
    Index best = -1;
    for (Index n = 1; n * n < c; ++n)
      if (c % n == 0) best = (c / n) - n;  // last hit has the smallest gap
    CHECK(p.m - p.n == best);
  }
}

TEST_CASE("stride-1 block construction") {
  const BlockSpec b24 = make_stride1_block(24);
  CHECK(b24.in_channels == 24);
  CHECK(b24.mid_channels == 12);
  CHECK(b24.out_channels == 24);
  CHECK(b24.m == 6);
  CHECK(b24.n == 4);
  CHECK(b24.first_kernel == 1);
  CHECK(b24.second_kernel == 3);

  const BlockSpec b96 = make_stride1_block(96);
  CHECK(b96.m == 12);
  CHECK(b96.n == 8);
  CHECK(b96.mid_channels == 48);

  CHECK_THROWS_WITH_AS(make_stride1_block(10), doctest::Contains("does not divide"),
                       BuildError);
}

TEST_CASE("stride-2 block construction covers all published transitions") {
  const BlockSpec a = make_stride2_block(24, 48);
  CHECK(a.mid_channels == 24);
  CHECK(a.m == 6);
  CHECK(a.n == 4);

  const BlockSpec b = make_stride2_block(96, 96);  // the non-doubling stage-3 case
  CHECK(b.mid_channels == 48);
  CHECK(b.m == 8);
  CHECK(b.n == 6);

  const BlockSpec c = make_stride2_block(96, 192);
  CHECK(c.mid_channels == 96);
  CHECK(c.m == 12);
  CHECK(c.n == 8);
}

TEST_CASE("builder reproduces the published shape trace and groups") {
  const GraphDef def = build_henet_def(default_config(3));

  // (stage, kind, count, out HxWxC, m, n)
  struct Want {
    int stage;
    BlockKind kind;
    int count;
    Index h, c, m, n;
  };
  const Want want[] = {
      {1, BlockKind::Stride1, 3, 31, 24, 6, 4}, {1, BlockKind::Stride2, 1, 15, 48, 6, 4},
      {2, BlockKind::Stride1, 3, 15, 48, 8, 6}, {2, BlockKind::Stride2, 1, 7, 96, 8, 6},
      {3, BlockKind::Stride1, 3, 7, 96, 12, 8}, {3, BlockKind::Stride2, 1, 3, 96, 8, 6},
      {4, BlockKind::Stride2, 1, 1, 192, 12, 8},
  };
  REQUIRE(def.rows.size() == 7);
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(def.rows[i].stage == want[i].stage);
    CHECK(def.rows[i].spec.kind == want[i].kind);
    CHECK(def.rows[i].count == want[i].count);
    CHECK(def.rows[i].output.h == want[i].h);
    CHECK(def.rows[i].output.c == want[i].c);
    CHECK(def.rows[i].spec.m == want[i].m);
    CHECK(def.rows[i].spec.n == want[i].n);
  }

  int blocks = 0;
  for (const StageRow& r : def.rows) blocks += r.count;
  CHECK(blocks == 13);
  CHECK(weighted_layer_count(def) == 28);  // stem + 13 blocks x 2 convs + FC
}

TEST_CASE("stride-2 padding: zero on the odd chain, one on the even chain") {
  for (Index size : {Index(31), Index(32)}) {
    NetworkConfig cfg = default_config(2);
    cfg.input_size = size;
    const GraphDef def = build_henet_def(cfg);
    for (const LayerDef& l : def.layers)
      if (l.kind == LayerKind::Conv && l.conv.stride == 2)
        CHECK(l.conv.padding == (size == 31 ? 0 : 1));
    // resolution chain via the row outputs
    std::vector<Index> hs;
    for (const StageRow& r : def.rows)
      if (r.spec.kind == BlockKind::Stride2) hs.push_back(r.output.h);
    if (size == 31)
      CHECK(hs == std::vector<Index>{15, 7, 3, 1});
    else
      CHECK(hs == std::vector<Index>{16, 8, 4, 2});
  }
}

TEST_CASE("builder structural invariants") {
  for (Index repeat : {Index(1), Index(2), Index(3), Index(4)}) {
    const GraphDef def = build_henet_def(default_config(repeat));
    const auto shapes = trace_shapes(def, def.input);

    int fc = 0;
    for (std::size_t i = 0; i < def.layers.size(); ++i) {
      const LayerDef& l = def.layers[i];
      if (l.kind == LayerKind::FC) ++fc;
      // spatial reductions come from stride-2 convs only
      const Shape in = l.src0 == kGraphInput ? def.input : shapes[static_cast<std::size_t>(l.src0)];
      if (l.kind != LayerKind::Conv) CHECK(shapes[i].h == in.h);
      if (l.kind == LayerKind::Conv && l.conv.stride == 1) CHECK(shapes[i].h == in.h);
    }
    CHECK(fc == 1);

    // every parameter belongs to exactly one layer: names are unique
    ModelGraph<float> g = materialize<float>(def);
    auto refs = trainable_parameters(g);
    std::set<std::string> names;
    for (const auto& r : refs) names.insert(r.name);
    CHECK(names.size() == refs.size());
  }
}

TEST_CASE("repeat=1 graph stays valid with the same resolution chain") {
  const GraphDef def = build_henet_def(default_config(1));
  std::vector<Index> hs;
  for (const StageRow& r : def.rows)
    if (r.spec.kind == BlockKind::Stride2) hs.push_back(r.output.h);
  CHECK(hs == std::vector<Index>{15, 7, 3, 1});
}

TEST_CASE("stride-1 block arithmetic with a stubbed transform") {
  // Hand-built block: h(x) comes from a zero conv with bias 1, so h == 1
  // everywhere; the first half of the input is 2 -> output halves are 3 and 1.
  GraphDef def;
  def.input = Shape{1, 4, 3, 3};
  LayerDef conv;
  conv.kind = LayerKind::Conv;
  conv.name = "stub.conv";
  conv.src0 = kGraphInput;
  conv.conv = ConvGeom{4, 2, 1, 1, 0, 1, true};
  def.layers.push_back(conv);
  LayerDef sl;
  sl.kind = LayerKind::Slice;
  sl.name = "stub.xprev";
  sl.src0 = kGraphInput;
  sl.slice_lo = 0;
  sl.slice_hi = 2;
  def.layers.push_back(sl);
  LayerDef ad;
  ad.kind = LayerKind::Add;
  ad.name = "stub.xplus";
  ad.src0 = 1;
  ad.src1 = 0;
  def.layers.push_back(ad);
  LayerDef cc;
  cc.kind = LayerKind::Concat;
  cc.name = "stub.concat";
  cc.src0 = 2;
  cc.src1 = 0;
  def.layers.push_back(cc);

  ModelGraph<float> g = materialize<float>(def);
  g.conv_at(0).bias = {1.0f, 1.0f};

  TensorF x(Shape{1, 4, 3, 3});
  for (Index c = 0; c < 2; ++c)
    for (Index i = 0; i < 9; ++i) x.plane(0, c)[i] = 2.0f;
  const TensorF out = forward_model(g, x, Mode::Infer);
  CHECK(out.shape() == Shape{1, 4, 3, 3});
  for (Index c = 0; c < 2; ++c)
    for (Index i = 0; i < 9; ++i) CHECK(out.plane(0, c)[i] == 3.0f);
  for (Index c = 2; c < 4; ++c)
    for (Index i = 0; i < 9; ++i) CHECK(out.plane(0, c)[i] == 1.0f);
}

TEST_CASE("running-sum semantics: unrolled three-block chain") {
  ModelGraph<float> g = build_henet<float>(default_config(3), 77);
  Rng rng(123);
  const TensorF x = testutil::random_tensor<float>(Shape{1, 3, 31, 31}, rng);
  ForwardTrace<float> tr = forward_trace(g, x, Mode::Infer);

  const auto& def = g.def;
  const TensorF& x0 = tr.acts[static_cast<std::size_t>(layer_index(def, "stem.relu"))];
  TensorF sum = slice_channels(x0, 0, 12);
  for (int b = 0; b < 3; ++b) {
    const TensorF& h =
        tr.acts[static_cast<std::size_t>(layer_index(def, "s1.b" + std::to_string(b) + ".relu2"))];
    sum = add_elementwise(sum, h);
  }
  const TensorF& out = tr.acts[static_cast<std::size_t>(layer_index(def, "s1.b2.concat"))];
  const TensorF first_half = slice_channels(out, 0, 12);
  CHECK(max_abs_diff(first_half, sum) < 1e-4);

  // second half of every block output is the block transform itself
  const TensorF second_half = slice_channels(out, 12, 24);
  const TensorF& h3 = tr.acts[static_cast<std::size_t>(layer_index(def, "s1.b2.relu2"))];
  CHECK(max_abs_diff(second_half, h3) == 0.0);
}

TEST_CASE("stride-1 blocks preserve shape; forward is deterministic") {
  ModelGraph<float> g = build_henet<float>(default_config(2), 5);
  Rng rng(6);
  const TensorF x = testutil::random_tensor<float>(Shape{1, 3, 31, 31}, rng);
  const TensorF s1 = forward_model(g, x, Mode::Infer);
  const TensorF s2 = forward_model(g, x, Mode::Infer);
  CHECK(s1.shape() == Shape{1, 10, 1, 1});
  CHECK(max_abs_diff(s1, s2) == 0.0);
}

TEST_CASE("zero-initialized classifier gives equal scores per row") {
  ModelGraph<float> g = materialize<float>(build_henet_def(default_config(1)));
  Rng rng(8);
  // batch norms are identity and convs are zero: scores must all equal the FC bias
  const TensorF x = testutil::random_tensor<float>(Shape{2, 3, 31, 31}, rng);
  const TensorF s = forward_model(g, x, Mode::Infer);
  for (Index n = 0; n < 2; ++n)
    for (Index k = 0; k < 10; ++k) CHECK(s(n, k, 0, 0) == 0.0f);
}

TEST_CASE("input shape mismatch is rejected") {
  ModelGraph<float> g = build_henet<float>(default_config(1), 1);
  CHECK_THROWS_AS(forward_model(g, TensorF(Shape{1, 3, 32, 32}), Mode::Infer), BuildError);
}

TEST_CASE("config file parsing") {
  const std::string path = "test_arch_config.tmp";
  {
    std::ofstream f(path);
    f << "# comment\n";
    f << "input_size = 31\n";
    f << "stem_channels = 24\n";
    f << "stage_channels = 24, 48, 96\n";
    f << "repeat = 2\n";
    f << "final_channels = 192\n";
    f << "num_classes = 10\n";
    f << "stage3_doubles = false\n";
  }
  const NetworkConfig cfg = parse_network_config(path);
  CHECK(cfg.repeat == 2);
  CHECK(cfg.stage_channels == std::vector<Index>{24, 48, 96});
  CHECK_FALSE(cfg.stage3_doubles);

  {
    std::ofstream f(path);
    f << "input_size = 31\nbogus_key = 3\n";
  }
  CHECK_THROWS_WITH_AS(parse_network_config(path), doctest::Contains("bogus_key"), BuildError);
  CHECK_THROWS_AS(parse_network_config("does_not_exist.cfg"), IoError);
  std::remove(path.c_str());
}

TEST_CASE("config validation") {
  NetworkConfig cfg;
  cfg.stage_channels = {24, 24, 96};
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("strictly increasing"), BuildError);
  NetworkConfig cfg2;
  cfg2.stem_channels = 16;
  CHECK_THROWS_AS(cfg2.validate(), BuildError);
}

TEST_CASE("stage3_doubles flag doubles the last regular stage") {
  NetworkConfig cfg = default_config(1);
  cfg.stage3_doubles = true;
  const GraphDef def = build_henet_def(cfg);
  // stage 3 stride-2 now goes 96 -> 192, stage 4 keeps 192
  CHECK(def.rows[5].output.c == 192);
  CHECK(def.rows[5].spec.m == 12);  // doubling case keys on in_c = 96
  CHECK(def.rows[5].spec.n == 8);
  CHECK(def.rows[6].output.c == 192);
}

TEST_CASE("shufflenet baseline: structure") {
  const GraphDef def = build_shufflenet_def(default_config(3));
  const auto shapes = trace_shapes(def, def.input);
  CHECK(shapes.back() == Shape{1, 10, 1, 1});

  // depthwise convs have groups == channels; the unit before FC ends at 192
  int dw = 0;
  for (const LayerDef& l : def.layers)
    if (l.kind == LayerKind::Conv && l.name.find("dwconv") != std::string::npos) {
      CHECK(l.conv.groups == l.conv.in_channels);
      CHECK(l.conv.groups == l.conv.out_channels);
      ++dw;
    }
  CHECK(dw == 13);  // one per unit

  const int fc_idx = layer_index(def, "fc");
  const Shape fc_in = shapes[static_cast<std::size_t>(def.layers[static_cast<std::size_t>(fc_idx)].src0)];
  CHECK(fc_in == Shape{1, 192, 1, 1});
}

TEST_CASE("shufflenet baseline: stride-1 units preserve shape") {
  ModelGraph<float> g = build_shufflenet_baseline<float>(default_config(2), 3);
  Rng rng(4);
  const TensorF x = testutil::random_tensor<float>(Shape{1, 3, 31, 31}, rng);
  ForwardTrace<float> tr = forward_trace(g, x, Mode::Infer);
  const auto& def = g.def;
  const Shape in_shape =
      tr.acts[static_cast<std::size_t>(layer_index(def, "stem.relu"))].shape();
  const Shape out_shape =
      tr.acts[static_cast<std::size_t>(layer_index(def, "s1.u0.relu"))].shape();
  CHECK(in_shape == out_shape);
  const TensorF s = forward_model(g, x, Mode::Infer);
  CHECK(s.shape() == Shape{1, 10, 1, 1});
}

TEST_CASE("block build errors carry the stage") {
  NetworkConfig cfg = default_config(2);
  cfg.input_size = 9;  // 9 -> 4 -> 1 -> too small at stage 3
  CHECK_THROWS_WITH_AS(build_henet_def(cfg), doctest::Contains("stage"), BuildError);
}
