#include "henet/graph.hpp"

namespace henet {

namespace {

// Emits layers and hands back producer indices.
struct Emitter {
  GraphDef& def;

  int push(LayerDef l) {
    def.layers.push_back(std::move(l));
    return static_cast<int>(def.layers.size()) - 1;
  }
  int conv(int src, std::string name, Index in, Index out, Index k, Index stride, Index pad,
           Index groups, bool bias = false) {
    LayerDef l;
    l.kind = LayerKind::Conv;
    l.name = std::move(name);
    l.src0 = src;
    l.conv = ConvGeom{in, out, k, stride, pad, groups, bias};
    return push(std::move(l));
  }
  int bn(int src, std::string name, Index ch) {
    LayerDef l;
    l.kind = LayerKind::BatchNorm;
    l.name = std::move(name);
    l.src0 = src;
    l.bn_channels = ch;
    return push(std::move(l));
  }
  int relu(int src, std::string name) {
    LayerDef l;
    l.kind = LayerKind::ReLU;
    l.name = std::move(name);
    l.src0 = src;
    return push(std::move(l));
  }
  int shuffle(int src, std::string name, Index groups) {
    LayerDef l;
    l.kind = LayerKind::Shuffle;
    l.name = std::move(name);
    l.src0 = src;
    l.shuffle_groups = groups;
    return push(std::move(l));
  }
  int add(int a, int b, std::string name) {
    LayerDef l;
    l.kind = LayerKind::Add;
    l.name = std::move(name);
    l.src0 = a;
    l.src1 = b;
    return push(std::move(l));
  }
  int concat(int a, int b, std::string name) {
    LayerDef l;
    l.kind = LayerKind::Concat;
    l.name = std::move(name);
    l.src0 = a;
    l.src1 = b;
    return push(std::move(l));
  }
  int slice(int src, std::string name, Index lo, Index hi) {
    LayerDef l;
    l.kind = LayerKind::Slice;
    l.name = std::move(name);
    l.src0 = src;
    l.slice_lo = lo;
    l.slice_hi = hi;
    return push(std::move(l));
  }
  int fc(int src, std::string name, Index in, Index out) {
    LayerDef l;
    l.kind = LayerKind::FC;
    l.name = std::move(name);
    l.src0 = src;
    l.fc_in = in;
    l.fc_out = out;
    return push(std::move(l));
  }
  // conv -> BN -> ReLU; returns the ReLU index.
  int cbr(int src, const std::string& base, const std::string& tag, Index in, Index out,
          Index k, Index stride, Index pad, Index groups) {
    const int c = conv(src, base + ".conv" + tag, in, out, k, stride, pad, groups);
    const int b = bn(c, base + ".bn" + tag, out);
    return relu(b, base + ".relu" + tag);
  }
};

// Padding 0 keeps odd resolutions odd through a 3x3/s2 conv; even inputs need
// padding 1 with floor division.
Index stride2_padding(Index h) { return (h - 3) % 2 == 0 ? 0 : 1; }

Index reduce_spatial(Index h, Index pad, const std::string& where) {
  if (h < 3)
    throw BuildError(where + ": spatial size " + std::to_string(h) +
                     " too small for a 3x3 stride-2 conv");
  return conv_out_dim(h, 3, 2, pad);
}

// Stride-1 HENet block: the running-sum half of the input picks up the block
// transform, and the result is concatenated with the transform itself.
int emit_henet_stride1(Emitter& e, int src, const BlockSpec& s, const std::string& base) {
  const int r1 = e.cbr(src, base, "1", s.in_channels, s.mid_channels, 1, 1, 0, s.m);
  const int sh = e.shuffle(r1, base + ".shuffle", s.m);
  const int c2 = e.conv(sh, base + ".conv2", s.mid_channels, s.mid_channels, 3, 1,
                        s.second_padding, s.n);
  const int b2 = e.bn(c2, base + ".bn2", s.mid_channels);
  const int h = e.relu(b2, base + ".relu2");
  const int xprev = e.slice(src, base + ".xprev", 0, s.mid_channels);
  const int xplus = e.add(xprev, h, base + ".xplus");
  return e.concat(xplus, h, base + ".concat");
}

int emit_henet_stride2(Emitter& e, int src, const BlockSpec& s, const std::string& base) {
  const int r1 = e.cbr(src, base, "1", s.in_channels, s.mid_channels, 3, 2, s.first_padding, s.m);
  const int sh = e.shuffle(r1, base + ".shuffle", s.m);
  const int c2 = e.conv(sh, base + ".conv2", s.mid_channels, s.out_channels, 1, 1, 0, s.n);
  const int b2 = e.bn(c2, base + ".bn2", s.out_channels);
  return e.relu(b2, base + ".relu2");
}

}  // namespace

GraphDef build_henet_def(const NetworkConfig& cfg) {
  cfg.validate();
  GraphDef def;
  def.arch = ArchKind::HENet;
  def.cfg = cfg;
  def.input = Shape{1, cfg.input_channels, cfg.input_size, cfg.input_size};
  Emitter e{def};

  Index h = cfg.input_size;
  int cur = e.cbr(kGraphInput, "stem", "", cfg.input_channels, cfg.stem_channels, 3, 1, 1, 1);

  const int nstages = static_cast<int>(cfg.stage_channels.size());
  Index channels = cfg.stem_channels;
  for (int si = 1; si <= nstages; ++si) {
    const Index width = cfg.stage_channels[static_cast<std::size_t>(si - 1)];
    const std::string stage = "s" + std::to_string(si);
    try {
      const BlockSpec s1 = make_stride1_block(width);
      for (Index r = 0; r < cfg.repeat; ++r)
        cur = emit_henet_stride1(e, cur, s1, stage + ".b" + std::to_string(r));
      def.rows.push_back({si, s1, static_cast<int>(cfg.repeat), Shape{1, width, h, h}});

      const Index out_c = si < nstages ? cfg.stage_channels[static_cast<std::size_t>(si)]
                                       : (cfg.stage3_doubles ? 2 * width : width);
      BlockSpec s2 = make_stride2_block(width, out_c);
      s2.first_padding = stride2_padding(h);
      h = reduce_spatial(h, s2.first_padding, stage);
      cur = emit_henet_stride2(e, cur, s2, stage + ".b" + std::to_string(cfg.repeat));
      def.rows.push_back({si, s2, 1, Shape{1, out_c, h, h}});
      channels = out_c;
    } catch (const BuildError& err) {
      throw BuildError("stage " + std::to_string(si) + ": " + err.what());
    }
  }

  // Final stage: a single stride-2 block does the last reduction in place of
  // any pooling.
  const int fsi = nstages + 1;
  try {
    BlockSpec s2 = make_stride2_block(channels, cfg.final_channels);
    s2.first_padding = stride2_padding(h);
    h = reduce_spatial(h, s2.first_padding, "s" + std::to_string(fsi));
    cur = emit_henet_stride2(e, cur, s2, "s" + std::to_string(fsi) + ".b0");
    def.rows.push_back({fsi, s2, 1, Shape{1, cfg.final_channels, h, h}});
  } catch (const BuildError& err) {
    throw BuildError("stage " + std::to_string(fsi) + ": " + err.what());
  }

  e.fc(cur, "fc", cfg.final_channels * h * h, cfg.num_classes);
  return def;
}

namespace {

// Comparison unit: 1x1 group conv -> shuffle -> 3x3 depthwise -> 1x1 group
// conv with a residual add; bottleneck ratio 2, 3 groups throughout.
constexpr Index kBaselineGroups = 3;

int emit_shuffle_unit_s1(Emitter& e, int src, Index width, const std::string& base) {
  const Index mid = width / 2;
  if (width % 2 != 0 || mid % kBaselineGroups != 0 || width % kBaselineGroups != 0)
    throw BuildError("shuffle unit: width " + std::to_string(width) +
                     " incompatible with 3 groups");
  const int r1 = e.cbr(src, base, "1", width, mid, 1, 1, 0, kBaselineGroups);
  const int sh = e.shuffle(r1, base + ".shuffle", kBaselineGroups);
  const int dw = e.conv(sh, base + ".dwconv", mid, mid, 3, 1, 1, mid);
  const int b2 = e.bn(dw, base + ".bn2", mid);
  const int c3 = e.conv(b2, base + ".conv3", mid, width, 1, 1, 0, kBaselineGroups);
  const int b3 = e.bn(c3, base + ".bn3", width);
  const int ad = e.add(src, b3, base + ".add");
  return e.relu(ad, base + ".relu");
}

int emit_shuffle_unit_s2(Emitter& e, int src, Index in_c, Index out_c, Index pad,
                         const std::string& base) {
  const Index mid = out_c / 2;
  if (out_c % 2 != 0 || mid % kBaselineGroups != 0 || in_c % kBaselineGroups != 0 ||
      out_c % kBaselineGroups != 0)
    throw BuildError("shuffle unit: " + std::to_string(in_c) + "->" + std::to_string(out_c) +
                     " incompatible with 3 groups");
  const int r1 = e.cbr(src, base, "1", in_c, mid, 1, 1, 0, kBaselineGroups);
  const int sh = e.shuffle(r1, base + ".shuffle", kBaselineGroups);
  const int dw = e.conv(sh, base + ".dwconv", mid, mid, 3, 2, pad, mid);
  const int b2 = e.bn(dw, base + ".bn2", mid);
  const int c3 = e.conv(b2, base + ".conv3", mid, out_c, 1, 1, 0, kBaselineGroups);
  const int b3 = e.bn(c3, base + ".bn3", out_c);
  // Strided projection shortcut instead of the usual average-pool path; this
  // repo ships no pooling layers.
  const int sc = e.conv(src, base + ".short.conv", in_c, out_c, 3, 2, pad, kBaselineGroups);
  const int sb = e.bn(sc, base + ".short.bn", out_c);
  const int ad = e.add(sb, b3, base + ".add");
  return e.relu(ad, base + ".relu");
}

}  // namespace

GraphDef build_shufflenet_def(const NetworkConfig& cfg) {
  cfg.validate();
  GraphDef def;
  def.arch = ArchKind::ShuffleNetBaseline;
  def.cfg = cfg;
  def.input = Shape{1, cfg.input_channels, cfg.input_size, cfg.input_size};
  Emitter e{def};

  Index h = cfg.input_size;
  int cur = e.cbr(kGraphInput, "stem", "", cfg.input_channels, cfg.stem_channels, 3, 1, 1, 1);

  const int nstages = static_cast<int>(cfg.stage_channels.size());
  Index channels = cfg.stem_channels;
  for (int si = 1; si <= nstages; ++si) {
    const Index width = cfg.stage_channels[static_cast<std::size_t>(si - 1)];
    const std::string stage = "s" + std::to_string(si);
    try {
      for (Index r = 0; r < cfg.repeat; ++r)
        cur = emit_shuffle_unit_s1(e, cur, width, stage + ".u" + std::to_string(r));
      const Index out_c = si < nstages ? cfg.stage_channels[static_cast<std::size_t>(si)]
                                       : (cfg.stage3_doubles ? 2 * width : width);
      const Index pad = stride2_padding(h);
      h = reduce_spatial(h, pad, stage);
      cur = emit_shuffle_unit_s2(e, cur, width, out_c, pad,
                                 stage + ".u" + std::to_string(cfg.repeat));
      channels = out_c;
    } catch (const BuildError& err) {
      throw BuildError("stage " + std::to_string(si) + ": " + err.what());
    }
  }

  const int fsi = nstages + 1;
  try {
    const Index pad = stride2_padding(h);
    h = reduce_spatial(h, pad, "s" + std::to_string(fsi));
    cur = emit_shuffle_unit_s2(e, cur, channels, cfg.final_channels, pad,
                               "s" + std::to_string(fsi) + ".u0");
  } catch (const BuildError& err) {
    throw BuildError("stage " + std::to_string(fsi) + ": " + err.what());
  }

  e.fc(cur, "fc", cfg.final_channels * h * h, cfg.num_classes);
  return def;
}

}  // namespace henet
