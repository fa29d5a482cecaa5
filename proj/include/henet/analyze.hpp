#pragma once

#include <string>
#include <vector>

#include "henet/format.hpp"
#include "henet/graph.hpp"

namespace henet {

struct AnalyzeOptions {
  bool include_bn_params = true;      // trainable gamma/beta in the param total
  bool include_running_stats = false; // also count BN running mean/var
};

struct LayerReportRow {
  std::string name;
  LayerKind kind = LayerKind::ReLU;
  Shape output;
  long long params = 0;
  long long macs = 0;      // multiply-accumulates (conv and FC only)
  long long elem_ops = 0;  // element-wise work: BN, ReLU, shuffle copies, add, concat
};

struct AnalysisReport {
  std::string model_id;
  std::string config_summary;
  Index repeat = 0;
  Shape input;
  std::vector<LayerReportRow> rows;
  long long total_params = 0;
  long long total_macs = 0;
  long long total_elem_ops = 0;
  bool bn_params_included = true;

  double mmacs() const { return static_cast<double>(total_macs) / 1e6; }
  // FLOPs convention: 2 per MAC.
  double mflops() const { return 2.0 * static_cast<double>(total_macs) / 1e6; }
};

// Per-layer and total parameter/MAC counts at batch 1.
AnalysisReport analyze_graph(const GraphDef& def, const AnalyzeOptions& opt = {});

long long count_params(const GraphDef& def, bool include_bn = true);
long long count_macs(const GraphDef& def);

// Reported CIFAR-10 reference points for repeats 2/3/4.
struct ReferencePoint {
  Index repeat;
  double params;
  double mflops;
};
const std::vector<ReferencePoint>& reference_points();

struct ComparisonRow {
  Index repeat = 0;
  long long computed_params = 0;
  double computed_mflops = 0;
  double computed_mmacs = 0;
  double reference_params = 0;
  double reference_mflops = 0;
  double params_ratio = 0;   // computed / reference
  double mflops_ratio = 0;
};

struct PaperComparison {
  std::vector<ComparisonRow> rows;
};

// Lines up computed totals with the reference values. The references are
// display-only: the counting convention behind them is not recoverable, so
// nothing here asserts equality.
PaperComparison compare_to_paper(const std::vector<AnalysisReport>& reports);

std::string format_report(const AnalysisReport& r, OutputFormat fmt, bool per_layer = true);
std::string format_comparison(const PaperComparison& c, OutputFormat fmt);

}  // namespace henet
