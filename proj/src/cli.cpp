#include "henet/cli.hpp"

#include <CLI11.hpp>

#include <ostream>
#include <sstream>

#include "henet/analyze.hpp"
#include "henet/bench.hpp"
#include "henet/data_io.hpp"
#include "henet/serialize.hpp"
#include "henet/train.hpp"

namespace henet {

namespace {

struct CommonOpts {
  Index repeat = 3;
  std::string config_path;
  Index input_size = 0;  // 0 = keep the config value
  Index classes = 0;
  std::string arch = "henet";
  std::uint64_t seed = 1;
  std::string format = "table";

  OutputFormat fmt() const {
    return format == "kv" ? OutputFormat::Kv : OutputFormat::Table;
  }

  NetworkConfig resolve_config() const {
    NetworkConfig cfg =
        config_path.empty() ? default_config(repeat) : parse_network_config(config_path);
    if (input_size > 0) cfg.input_size = input_size;
    if (classes > 0) cfg.num_classes = classes;
    cfg.validate();
    return cfg;
  }

  GraphDef build_def() const {
    const NetworkConfig cfg = resolve_config();
    return arch == "henet" ? build_henet_def(cfg) : build_shufflenet_def(cfg);
  }
};

void add_common_options(CLI::App* sub, CommonOpts& o) {
  auto* rep = sub->add_option("--repeat", o.repeat, "stride-1 blocks per stage (default config)")
                  ->check(CLI::PositiveNumber);
  auto* cfg = sub->add_option("--config", o.config_path, "network config file (key = value)");
  rep->excludes(cfg);
  cfg->excludes(rep);
  sub->add_option("--input-size", o.input_size, "override input resolution")
      ->check(CLI::PositiveNumber);
  sub->add_option("--classes", o.classes, "override class count")->check(CLI::PositiveNumber);
  sub->add_option("--arch", o.arch, "model family")
      ->check(CLI::IsMember({"henet", "shufflenet"}));
  sub->add_option("--seed", o.seed, "random seed");
  sub->add_option("--format", o.format, "output format")->check(CLI::IsMember({"table", "kv"}));
}

std::string hwc(const Shape& s) {
  return std::to_string(s.h) + "x" + std::to_string(s.w) + "x" + std::to_string(s.c);
}

std::string hwc_pretty(const Shape& s) {
  return std::to_string(s.h) + "×" + std::to_string(s.w) + "×" + std::to_string(s.c);
}

std::string pad(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

std::string trace_string(const GraphDef& def, bool pretty) {
  const std::string arrow = pretty ? " → " : " -> ";
  auto fmt = [&](const Shape& s) { return pretty ? hwc_pretty(s) : hwc(s); };
  std::string t = fmt(def.input);
  const auto shapes = trace_shapes(def, def.input);
  t += arrow + fmt(shapes[static_cast<std::size_t>(layer_index(def, "stem.relu"))]);
  for (const StageRow& row : def.rows) {
    std::string entry = fmt(row.output);
    if (row.count > 1)
      entry = std::to_string(row.count) + (pretty ? "×[" : "x[") + entry + "]";
    t += arrow + entry;
  }
  t += arrow + "FC " + std::to_string(def.cfg.num_classes);
  return t;
}

int cmd_describe(const CommonOpts& o, std::ostream& out) {
  const GraphDef def = o.build_def();
  const auto shapes = trace_shapes(def, def.input);
  if (o.fmt() == OutputFormat::Kv) {
    out << "arch=" << (def.arch == ArchKind::HENet ? "henet" : "shufflenet") << "\n";
    out << "config=" << def.cfg.summary() << "\n";
    for (std::size_t i = 0; i < def.rows.size(); ++i) {
      const StageRow& r = def.rows[i];
      const std::string p = "row." + std::to_string(i);
      out << p << ".stage=" << r.stage << "\n";
      out << p << ".kind=" << (r.spec.kind == BlockKind::Stride1 ? "stride1" : "stride2") << "\n";
      out << p << ".count=" << r.count << "\n";
      out << p << ".output=" << hwc(r.output) << "\n";
      out << p << ".m=" << r.spec.m << "\n";
      out << p << ".n=" << r.spec.n << "\n";
    }
    out << "weighted_layers=" << weighted_layer_count(def) << "\n";
    out << "trace=" << trace_string(def, false) << "\n";
    return kExitOk;
  }

  out << (def.arch == ArchKind::HENet ? "HENet" : "ShuffleNet baseline") << " (repeat "
      << def.cfg.repeat << ")\n";
  out << "config: " << def.cfg.summary() << "\n";
  if (def.arch == ArchKind::HENet) {
    out << pad("layer", 10) << pad("output", 13) << pad("S", 3) << pad("repeat", 8)
        << pad("m", 4) << "n\n";
    out << pad("image", 10) << hwc(def.input) << "\n";
    out << pad("conv1", 10)
        << pad(hwc(shapes[static_cast<std::size_t>(layer_index(def, "stem.relu"))]), 13)
        << pad("1", 3) << "\n";
    for (const StageRow& r : def.rows) {
      out << pad("stage" + std::to_string(r.stage), 10) << pad(hwc(r.output), 13)
          << pad(r.spec.kind == BlockKind::Stride1 ? "1" : "2", 3)
          << pad(std::to_string(r.count), 8) << pad(std::to_string(r.spec.m), 4) << r.spec.n
          << "\n";
    }
    out << pad("fc", 10) << def.cfg.num_classes << "\n";
    out << "trace: " << trace_string(def, true) << "\n";
  } else {
    out << pad("layer", 18) << pad("kind", 9) << "output\n";
    for (std::size_t i = 0; i < def.layers.size(); ++i)
      out << pad(def.layers[i].name, 18) << pad(layer_kind_name(def.layers[i].kind), 9)
          << hwc(shapes[i]) << "\n";
    out << "weighted layers: " << weighted_layer_count(def) << "\n";
  }
  return kExitOk;
}

bool is_default_shape(const NetworkConfig& cfg) {
  const NetworkConfig d = default_config(cfg.repeat);
  return cfg.input_size == d.input_size && cfg.input_channels == d.input_channels &&
         cfg.stem_channels == d.stem_channels && cfg.stage_channels == d.stage_channels &&
         cfg.final_channels == d.final_channels && cfg.num_classes == d.num_classes &&
         cfg.stage3_doubles == d.stage3_doubles;
}

struct AnalyzeOpts {
  bool no_bn_params = false;
  bool include_running = false;
  bool layers = false;
  bool no_compare = false;
};

int cmd_analyze(const CommonOpts& o, const AnalyzeOpts& a, std::ostream& out) {
  const GraphDef def = o.build_def();
  AnalyzeOptions opt;
  opt.include_bn_params = !a.no_bn_params;
  opt.include_running_stats = a.include_running;
  const AnalysisReport rep = analyze_graph(def, opt);
  const bool per_layer = o.fmt() == OutputFormat::Table || a.layers;
  out << format_report(rep, o.fmt(), per_layer);

  // Reference comparison is defined for the default architecture only.
  if (!a.no_compare && def.arch == ArchKind::HENet && is_default_shape(def.cfg)) {
    std::vector<AnalysisReport> reports;
    for (Index r : {Index(2), Index(3), Index(4)})
      reports.push_back(analyze_graph(build_henet_def(default_config(r)), opt));
    out << format_comparison(compare_to_paper(reports), o.fmt());
  }
  return kExitOk;
}

struct DataOpts {
  std::string data_dir;
  std::string dataset = "cifar10";
  Index synth_n = 512;

  // Returns train and test splits; synth uses one generated set for both.
  DatasetPair load(const NetworkConfig& cfg, std::uint64_t seed) const {
    if (dataset == "cifar10") return load_cifar10(data_dir);
    if (dataset == "cifar100") return load_cifar100(data_dir);
    DatasetPair p;
    p.train = synth_dataset(synth_n, static_cast<int>(cfg.num_classes), seed);
    p.test = p.train;
    return p;
  }
};

void add_data_options(CLI::App* sub, DataOpts& d) {
  sub->add_option("--data", d.data_dir, "dataset directory (binary batches)");
  sub->add_option("--dataset", d.dataset, "dataset kind")
      ->check(CLI::IsMember({"cifar10", "cifar100", "synth"}));
  sub->add_option("--synth-n", d.synth_n, "synthetic dataset size")->check(CLI::PositiveNumber);
}

struct TrainOpts {
  long long iters = 65000;
  Index batch = 128;
  double lr = 0.01;
  double momentum = 0.9;
  double wd = 0.0005;
  double lr_factor = 0.1;
  std::vector<long long> lr_steps = {32000, 48000};
  Index subset = 0;
  bool no_augment = false;
  bool no_bn_decay = false;
  long long log_every = 100;
  long long eval_every = 0;
  double stop_accuracy = 0.0;
  std::string out_path;
};

int cmd_train(const CommonOpts& o, const DataOpts& d, const TrainOpts& t, std::ostream& out,
              std::ostream& err) {
  if (d.dataset != "synth" && d.data_dir.empty()) {
    err << "usage error: train requires --data <dir> for dataset '" << d.dataset << "'\n";
    return kExitUsage;
  }
  NetworkConfig cfg = o.resolve_config();
  if (o.classes == 0 && d.dataset == "cifar100") cfg.num_classes = 100;
  cfg.validate();

  LabeledDataset train = d.load(cfg, o.seed).train;
  if (t.subset > 0) train = train.head(t.subset);

  ModelGraph<float> g = o.arch == "henet" ? build_henet<float>(cfg, o.seed)
                                          : build_shufflenet_baseline<float>(cfg, o.seed);
  TrainConfig tc;
  tc.base_lr = t.lr;
  // steps at or past the iteration budget never fire; drop them
  tc.lr_steps.clear();
  for (long long s : t.lr_steps)
    if (s < t.iters) tc.lr_steps.push_back(s);
  tc.lr_factor = t.lr_factor;
  tc.max_iter = t.iters;
  tc.weight_decay = t.wd;
  tc.batch_size = t.batch;
  tc.momentum = t.momentum;
  tc.seed = o.seed;
  tc.augment = !t.no_augment;
  tc.decay_bn_params = !t.no_bn_decay;
  tc.log_every = t.log_every;
  tc.eval_every = t.eval_every;
  tc.stop_accuracy = t.stop_accuracy;

  const TrainResult r = train_loop(g, train, tc, out);
  out << "final.iters=" << r.iterations << "\n";
  out << "final.loss=" << r.final_loss << "\n";
  out << "final.lr=" << r.final_lr << "\n";
  out << "final.train_accuracy=" << r.train_accuracy << "\n";
  out << "final.stopped_early=" << (r.stopped_early ? "true" : "false") << "\n";
  if (!t.out_path.empty()) {
    save_model(g, t.out_path);
    out << "model_saved=" << t.out_path << "\n";
  }
  return kExitOk;
}

int cmd_eval(const std::string& model_path, const DataOpts& d, const std::string& split,
             const CommonOpts& o, std::ostream& out, std::ostream& err) {
  if (d.dataset != "synth" && d.data_dir.empty()) {
    err << "usage error: eval requires --data <dir> for dataset '" << d.dataset << "'\n";
    return kExitUsage;
  }
  ModelGraph<float> g = load_model(model_path);
  DatasetPair pair = d.load(g.def.cfg, o.seed);
  LabeledDataset ds = split == "train" ? std::move(pair.train) : std::move(pair.test);
  // the model carries its own normalization
  ds.channel_means = g.input_means;
  const double acc = evaluate(g, ds);
  out << "split=" << split << "\n";
  out << "samples=" << ds.count << "\n";
  out << "accuracy=" << fmt_double(acc, 4) << "\n";
  return kExitOk;
}

struct BenchOpts {
  int runs = 1000;
  int trials = 5;
  bool odd_even = false;
};

int cmd_bench(const CommonOpts& o, const BenchOpts& b, std::ostream& out) {
  if (b.odd_even) {
    const NetworkConfig cfg = o.resolve_config();
    const OddEvenResult r = odd_even_experiment(cfg, b.runs, b.trials, o.seed);
    out << format_bench(r.odd, o.fmt());
    out << format_bench(r.even, o.fmt());
    out << format_odd_even(r, o.fmt());
    return kExitOk;
  }
  const NetworkConfig cfg = o.resolve_config();
  ModelGraph<float> g = o.arch == "henet" ? build_henet<float>(cfg, o.seed)
                                          : build_shufflenet_baseline<float>(cfg, o.seed);
  const BenchResult r = bench_forward(g, g.def.input, b.runs, b.trials, o.seed);
  out << format_bench(r, o.fmt());
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"HENet: grouped-convolution CNN engine, analyzer and benchmark"};
  app.require_subcommand(1);

  CommonOpts describe_o, analyze_o, train_o, eval_o, bench_o;
  AnalyzeOpts analyze_flags;
  DataOpts train_data, eval_data;
  TrainOpts train_flags;
  BenchOpts bench_flags;
  std::string eval_model, eval_split = "test";

  CLI::App* describe = app.add_subcommand("describe", "print the architecture table and trace");
  add_common_options(describe, describe_o);

  CLI::App* analyze = app.add_subcommand("analyze", "parameter and FLOP static analysis");
  add_common_options(analyze, analyze_o);
  analyze->add_flag("--no-bn-params", analyze_flags.no_bn_params,
                    "exclude BN gamma/beta from the param total");
  analyze->add_flag("--include-running-stats", analyze_flags.include_running,
                    "count BN running stats as params");
  analyze->add_flag("--layers", analyze_flags.layers, "per-layer rows in kv format");
  analyze->add_flag("--no-compare", analyze_flags.no_compare, "skip the reference comparison");

  CLI::App* train = app.add_subcommand("train", "train a model");
  add_common_options(train, train_o);
  add_data_options(train, train_data);
  train->add_option("--iters", train_flags.iters, "max iterations");
  train->add_option("--batch", train_flags.batch, "minibatch size")->check(CLI::PositiveNumber);
  train->add_option("--lr", train_flags.lr, "base learning rate");
  train->add_option("--momentum", train_flags.momentum, "Nesterov momentum");
  train->add_option("--wd", train_flags.wd, "weight decay");
  train->add_option("--lr-steps", train_flags.lr_steps, "iterations at which lr drops")
      ->delimiter(',');
  train->add_option("--lr-factor", train_flags.lr_factor, "lr multiplier at each step");
  train->add_option("--subset", train_flags.subset, "train on the first N samples");
  train->add_flag("--no-augment", train_flags.no_augment, "disable crop/flip augmentation");
  train->add_flag("--no-bn-decay", train_flags.no_bn_decay, "exempt BN params from weight decay");
  train->add_option("--log-every", train_flags.log_every, "loss log interval");
  train->add_option("--eval-every", train_flags.eval_every, "train-accuracy eval interval");
  train->add_option("--stop-accuracy", train_flags.stop_accuracy,
                    "stop once train accuracy reaches this");
  train->add_option("--out", train_flags.out_path, "write the trained model here");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a saved model");
  add_common_options(eval, eval_o);
  add_data_options(eval, eval_data);
  eval->add_option("--model", eval_model, "model file")->required();
  eval->add_option("--split", eval_split, "dataset split")
      ->check(CLI::IsMember({"train", "test"}));

  CLI::App* bench = app.add_subcommand("bench", "single-threaded forward timing");
  add_common_options(bench, bench_o);
  bench->add_option("--runs", bench_flags.runs, "forwards per trial")->check(CLI::PositiveNumber);
  bench->add_option("--trials", bench_flags.trials, "trials")->check(CLI::PositiveNumber);
  bench->add_flag("--odd-even", bench_flags.odd_even, "compare input 31 vs 32");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (describe->parsed()) return cmd_describe(describe_o, out);
    if (analyze->parsed()) return cmd_analyze(analyze_o, analyze_flags, out);
    if (train->parsed()) return cmd_train(train_o, train_data, train_flags, out, err);
    if (eval->parsed()) return cmd_eval(eval_model, eval_data, eval_split, eval_o, out, err);
    if (bench->parsed()) return cmd_bench(bench_o, bench_flags, out);
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const BuildError& e) {
    err << "build error: " << e.what() << "\n";
    return kExitBuild;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitBuild;
  }
  return kExitUsage;
}

}  // namespace henet
