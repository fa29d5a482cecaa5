#include "henet/graph.hpp"

namespace henet {

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::BatchNorm: return "bn";
    case LayerKind::ReLU: return "relu";
    case LayerKind::Shuffle: return "shuffle";
    case LayerKind::Add: return "add";
    case LayerKind::Concat: return "concat";
    case LayerKind::Slice: return "slice";
    case LayerKind::FC: return "fc";
  }
  return "?";
}

std::string GraphDef::id() const {
  const std::string base = arch == ArchKind::HENet ? "henet" : "shufflenet";
  return base + "-r" + std::to_string(cfg.repeat);
}

std::vector<Shape> trace_shapes(const GraphDef& def, Shape input) {
  std::vector<Shape> shapes(def.layers.size());
  auto at = [&](int idx) -> const Shape& {
    return idx == kGraphInput ? input : shapes[static_cast<std::size_t>(idx)];
  };
  for (std::size_t i = 0; i < def.layers.size(); ++i) {
    const LayerDef& l = def.layers[i];
    const Shape& in = at(l.src0);
    switch (l.kind) {
      case LayerKind::Conv: {
        if (in.c != l.conv.in_channels)
          throw BuildError(l.name + ": input channels " + std::to_string(in.c) +
                           " != " + std::to_string(l.conv.in_channels));
        const Index ho = conv_out_dim(in.h, l.conv.kernel, l.conv.stride, l.conv.padding);
        const Index wo = conv_out_dim(in.w, l.conv.kernel, l.conv.stride, l.conv.padding);
        if (ho < 1 || wo < 1)
          throw BuildError(l.name + ": non-positive output for input " + in.str());
        shapes[i] = Shape{in.n, l.conv.out_channels, ho, wo};
        break;
      }
      case LayerKind::BatchNorm:
        if (in.c != l.bn_channels)
          throw BuildError(l.name + ": channel mismatch");
        shapes[i] = in;
        break;
      case LayerKind::ReLU:
        shapes[i] = in;
        break;
      case LayerKind::Shuffle:
        if (l.shuffle_groups < 1 || in.c % l.shuffle_groups != 0)
          throw BuildError(l.name + ": groups do not divide channels");
        shapes[i] = in;
        break;
      case LayerKind::Add: {
        const Shape& b = at(l.src1);
        if (!(in == b))
          throw BuildError(l.name + ": operand shapes " + in.str() + " vs " + b.str());
        shapes[i] = in;
        break;
      }
      case LayerKind::Concat: {
        const Shape& b = at(l.src1);
        if (in.n != b.n || in.h != b.h || in.w != b.w)
          throw BuildError(l.name + ": operand shapes " + in.str() + " vs " + b.str());
        shapes[i] = Shape{in.n, in.c + b.c, in.h, in.w};
        break;
      }
      case LayerKind::Slice:
        if (l.slice_lo < 0 || l.slice_hi < l.slice_lo || l.slice_hi > in.c)
          throw BuildError(l.name + ": slice range out of bounds");
        shapes[i] = Shape{in.n, l.slice_hi - l.slice_lo, in.h, in.w};
        break;
      case LayerKind::FC:
        if (in.c * in.h * in.w != l.fc_in)
          throw BuildError(l.name + ": input flattens to " +
                           std::to_string(in.c * in.h * in.w) + ", expected " +
                           std::to_string(l.fc_in));
        shapes[i] = Shape{in.n, l.fc_out, 1, 1};
        break;
    }
  }
  return shapes;
}

int layer_index(const GraphDef& def, std::string_view name) {
  for (std::size_t i = 0; i < def.layers.size(); ++i)
    if (def.layers[i].name == name) return static_cast<int>(i);
  throw BuildError("no layer named '" + std::string(name) + "'");
}

Index weighted_layer_count(const GraphDef& def) {
  Index n = 0;
  for (const LayerDef& l : def.layers)
    if (l.kind == LayerKind::Conv || l.kind == LayerKind::FC) ++n;
  return n;
}

}  // namespace henet
