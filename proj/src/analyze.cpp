#include "henet/analyze.hpp"

#include <sstream>

namespace henet {

namespace {

long long conv_params(const ConvGeom& g) {
  long long p = static_cast<long long>(g.in_channels) * g.out_channels * g.kernel * g.kernel /
                g.groups;
  if (g.has_bias) p += g.out_channels;
  return p;
}

long long conv_macs(const ConvGeom& g, const Shape& out) {
  // weight count per output channel x output positions
  return static_cast<long long>(g.out_channels) * (g.in_channels / g.groups) * g.kernel *
         g.kernel * out.h * out.w * out.n;
}

}  // namespace

AnalysisReport analyze_graph(const GraphDef& def, const AnalyzeOptions& opt) {
  AnalysisReport rep;
  rep.model_id = def.id();
  rep.config_summary = def.cfg.summary();
  rep.repeat = def.cfg.repeat;
  rep.input = def.input;
  rep.bn_params_included = opt.include_bn_params;
  const std::vector<Shape> shapes = trace_shapes(def, def.input);

  for (std::size_t i = 0; i < def.layers.size(); ++i) {
    const LayerDef& l = def.layers[i];
    const Shape& out = shapes[i];
    LayerReportRow row;
    row.name = l.name;
    row.kind = l.kind;
    row.output = out;
    switch (l.kind) {
      case LayerKind::Conv:
        row.params = conv_params(l.conv);
        row.macs = conv_macs(l.conv, out);
        if (l.conv.has_bias) row.elem_ops = out.numel();
        break;
      case LayerKind::BatchNorm:
        if (opt.include_bn_params) row.params = 2 * l.bn_channels;
        if (opt.include_running_stats) row.params += 2 * l.bn_channels;
        row.elem_ops = 2 * out.numel();  // scale and shift
        break;
      case LayerKind::FC:
        row.params = static_cast<long long>(l.fc_in) * l.fc_out + l.fc_out;
        row.macs = static_cast<long long>(l.fc_in) * l.fc_out * out.n;
        row.elem_ops = l.fc_out * out.n;  // bias adds
        break;
      case LayerKind::ReLU:
      case LayerKind::Shuffle:
      case LayerKind::Add:
      case LayerKind::Concat:
      case LayerKind::Slice:
        row.elem_ops = out.numel();
        break;
    }
    rep.total_params += row.params;
    rep.total_macs += row.macs;
    rep.total_elem_ops += row.elem_ops;
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

long long count_params(const GraphDef& def, bool include_bn) {
  AnalyzeOptions opt;
  opt.include_bn_params = include_bn;
  return analyze_graph(def, opt).total_params;
}

long long count_macs(const GraphDef& def) { return analyze_graph(def).total_macs; }

const std::vector<ReferencePoint>& reference_points() {
  static const std::vector<ReferencePoint> pts = {
      {2, 507e3, 7.3},
      {3, 641e3, 10.2},
      {4, 775e3, 13.2},
  };
  return pts;
}

PaperComparison compare_to_paper(const std::vector<AnalysisReport>& reports) {
  PaperComparison cmp;
  for (const AnalysisReport& r : reports) {
    const ReferencePoint* ref = nullptr;
    for (const ReferencePoint& p : reference_points())
      if (p.repeat == r.repeat) ref = &p;
    if (!ref)
      throw BuildError("no reference values for repeat=" + std::to_string(r.repeat));
    ComparisonRow row;
    row.repeat = r.repeat;
    row.computed_params = r.total_params;
    row.computed_mflops = r.mflops();
    row.computed_mmacs = r.mmacs();
    row.reference_params = ref->params;
    row.reference_mflops = ref->mflops;
    row.params_ratio = static_cast<double>(r.total_params) / ref->params;
    row.mflops_ratio = r.mflops() / ref->mflops;
    cmp.rows.push_back(row);
  }
  return cmp;
}

namespace {

std::string shape_compact(const Shape& s) {
  return std::to_string(s.n) + "x" + std::to_string(s.c) + "x" + std::to_string(s.h) + "x" +
         std::to_string(s.w);
}

void pad_to(std::string& s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
}

}  // namespace

std::string format_report(const AnalysisReport& r, OutputFormat fmt, bool per_layer) {
  std::ostringstream out;
  if (fmt == OutputFormat::Kv) {
    out << "model=" << r.model_id << "\n";
    out << "config=" << r.config_summary << "\n";
    out << "input=" << shape_compact(r.input) << "\n";
    if (per_layer) {
      for (const auto& row : r.rows) {
        out << "layer." << row.name << ".kind=" << layer_kind_name(row.kind) << "\n";
        out << "layer." << row.name << ".output=" << shape_compact(row.output) << "\n";
        out << "layer." << row.name << ".params=" << row.params << "\n";
        out << "layer." << row.name << ".macs=" << row.macs << "\n";
        out << "layer." << row.name << ".elem_ops=" << row.elem_ops << "\n";
      }
    }
    out << "total.params=" << r.total_params << "\n";
    out << "total.macs=" << r.total_macs << "\n";
    out << "total.flops=" << 2 * r.total_macs << "\n";
    out << "total.mflops=" << fmt_double(r.mflops()) << "\n";
    out << "total.elem_ops=" << r.total_elem_ops << "\n";
    out << "bn_params_included=" << (r.bn_params_included ? "true" : "false") << "\n";
    return out.str();
  }

  out << "model " << r.model_id << "  input " << shape_compact(r.input) << "\n";
  out << "config: " << r.config_summary << "\n";
  if (per_layer) {
    std::string h0 = "layer", h1 = "kind", h2 = "output", h3 = "params", h4 = "MACs",
                h5 = "elem ops";
    pad_to(h0, 18);
    pad_to(h1, 9);
    pad_to(h2, 14);
    pad_to(h3, 10);
    pad_to(h4, 12);
    out << h0 << h1 << h2 << h3 << h4 << h5 << "\n";
    for (const auto& row : r.rows) {
      std::string c0 = row.name, c1 = layer_kind_name(row.kind), c2 = shape_compact(row.output),
                  c3 = std::to_string(row.params), c4 = std::to_string(row.macs),
                  c5 = std::to_string(row.elem_ops);
      pad_to(c0, 18);
      pad_to(c1, 9);
      pad_to(c2, 14);
      pad_to(c3, 10);
      pad_to(c4, 12);
      out << c0 << c1 << c2 << c3 << c4 << c5 << "\n";
    }
  }
  out << "totals: params=" << r.total_params << " macs=" << r.total_macs
      << " mflops=" << fmt_double(r.mflops()) << " elem_ops=" << r.total_elem_ops
      << " (bn params " << (r.bn_params_included ? "included" : "excluded") << ")\n";
  return out.str();
}

std::string format_comparison(const PaperComparison& c, OutputFormat fmt) {
  std::ostringstream out;
  if (fmt == OutputFormat::Kv) {
    for (const auto& row : c.rows) {
      const std::string p = "reference.repeat" + std::to_string(row.repeat);
      out << p << ".params.computed=" << row.computed_params << "\n";
      out << p << ".params.reference=" << static_cast<long long>(row.reference_params) << "\n";
      out << p << ".params.ratio=" << fmt_double(row.params_ratio) << "\n";
      out << p << ".mflops.computed=" << fmt_double(row.computed_mflops) << "\n";
      out << p << ".mflops.reference=" << fmt_double(row.reference_mflops, 1) << "\n";
      out << p << ".mflops.ratio=" << fmt_double(row.mflops_ratio) << "\n";
      out << p << ".mmacs.computed=" << fmt_double(row.computed_mmacs) << "\n";
    }
    return out.str();
  }
  out << "comparison with reported values (computed / reference; display only):\n";
  std::string h0 = "repeat", h1 = "params", h2 = "ref params", h3 = "ratio", h4 = "MFLOPs",
              h5 = "ref MFLOPs", h6 = "ratio", h7 = "MMACs";
  pad_to(h0, 8);
  pad_to(h1, 10);
  pad_to(h2, 12);
  pad_to(h3, 8);
  pad_to(h4, 10);
  pad_to(h5, 12);
  pad_to(h6, 8);
  out << h0 << h1 << h2 << h3 << h4 << h5 << h6 << h7 << "\n";
  for (const auto& row : c.rows) {
    std::string c0 = std::to_string(row.repeat), c1 = std::to_string(row.computed_params),
                c2 = std::to_string(static_cast<long long>(row.reference_params)),
                c3 = fmt_double(row.params_ratio), c4 = fmt_double(row.computed_mflops),
                c5 = fmt_double(row.reference_mflops, 1), c6 = fmt_double(row.mflops_ratio),
                c7 = fmt_double(row.computed_mmacs);
    pad_to(c0, 8);
    pad_to(c1, 10);
    pad_to(c2, 12);
    pad_to(c3, 8);
    pad_to(c4, 10);
    pad_to(c5, 12);
    pad_to(c6, 8);
    out << c0 << c1 << c2 << c3 << c4 << c5 << c6 << c7 << "\n";
  }
  return out.str();
}

}  // namespace henet
