#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mfg/baselines.hpp"
#include "mfg/dgcnn.hpp"
#include "mfg/errors.hpp"
#include "mfg/graph.hpp"
#include "mfg/harness.hpp"
#include "mfg/hashing.hpp"
#include "mfg/ingest.hpp"
#include "mfg/metrics.hpp"
#include "mfg/pe.hpp"
#include "mfg/rng.hpp"
#include "mfg/textio.hpp"

namespace fs = std::filesystem;
using namespace mfg;

namespace {

// Records straight off disk, no label/year filtering; directories expand to
// their *.jsonl files in name order.
std::vector<ingest::FeatureRecord> load_records_raw(
    const std::vector<std::string>& inputs) {
  std::vector<ingest::FeatureRecord> out;
  for (const std::string& file : ingest::expand_inputs(inputs)) {
    std::istringstream lines(read_text_file(file));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(lines, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      try {
        out.push_back(ingest::parse_record(line, line_no));
      } catch (const SchemaError& e) {
        throw SchemaError(file + ": " + e.what());
      }
    }
  }
  return out;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir + ": cannot create directory: " + ec.message());
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void print_report(const metrics::MetricsReport& r) {
  std::printf(
      "%s: n=%lld accuracy=%.5f precision=%.5f recall=%.5f f1=%.5f auc=%.5f\n",
      r.tag.c_str(), static_cast<long long>(r.n), r.accuracy, r.precision,
      r.recall, r.f1, r.auc);
}

void write_eval_outputs(const std::string& out_dir,
                        const metrics::MetricsReport& report,
                        std::span<const double> scores,
                        std::span<const int> truths) {
  ensure_dir(out_dir);
  const metrics::MetricsReport reports[] = {report};
  write_text_file(join_path(out_dir, "report.csv"),
                  metrics::report_csv(reports));
  write_text_file(join_path(out_dir, "scores.csv"),
                  metrics::scores_csv(scores, truths));
}

harness::ExperimentConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return harness::ExperimentConfig{};
  return harness::load_experiment_config(path);
}

// ---------------------------------------------------------------------------

struct IngestArgs {
  std::vector<std::string> inputs;
  std::string out_dir;
  int year = 2018;
  std::string split_month;
  double ratio = 0.8;
  std::uint64_t seed = 1;
};

void cmd_ingest(const IngestArgs& args) {
  ingest::LoadStats stats;
  std::vector<ingest::FeatureRecord> records =
      ingest::load_filtered(args.inputs, &stats, args.year);
  auto by_month = ingest::partition_by_month(std::move(records));

  ensure_dir(args.out_dir);
  std::printf("kept %zu records (dropped: %zu unlabeled, %zu outside %d)\n",
              stats.kept, stats.dropped_unlabeled, stats.dropped_wrong_year,
              args.year);
  for (const auto& [month, recs] : by_month) {
    const std::string path = join_path(args.out_dir, month.str() + ".jsonl");
    ingest::write_records(path, recs);
    std::printf("%s: %zu records -> %s\n", month.str().c_str(), recs.size(),
                path.c_str());
  }

  if (!args.split_month.empty()) {
    const YearMonth month = YearMonth::parse(args.split_month);
    auto it = by_month.find(month);
    if (it == by_month.end())
      throw DataError("no records in split month " + month.str());
    ingest::DatasetSplit split = ingest::split_train_test(
        it->second, args.ratio, derive_seed(args.seed, SeedStream::split));
    const std::string train_path =
        join_path(args.out_dir, month.str() + ".train.jsonl");
    const std::string test_path =
        join_path(args.out_dir, month.str() + ".test.jsonl");
    ingest::write_records(train_path, split.train);
    ingest::write_records(test_path, split.test);
    std::printf("split %s: %zu train / %zu test\n", month.str().c_str(),
                split.train.size(), split.test.size());
  }
}

struct ExtractArgs {
  std::vector<std::string> inputs;
  std::string out_file;
  int label = -1;
  std::string manifest;
  std::string appeared = "2018-01";
};

void cmd_extract(const ExtractArgs& args) {
  std::map<std::string, int> manifest_labels;
  if (!args.manifest.empty()) {
    std::istringstream lines(read_text_file(args.manifest));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(lines, line)) {
      ++line_no;
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      const auto comma = t.find(',');
      if (comma == std::string::npos)
        throw SchemaError(args.manifest + ": line " +
                          std::to_string(line_no) + ": expected name,label");
      const std::string name = trim(t.substr(0, comma));
      const std::string value = trim(t.substr(comma + 1));
      if (value != "0" && value != "1")
        throw SchemaError(args.manifest + ": line " +
                          std::to_string(line_no) + ": label must be 0 or 1");
      manifest_labels[name] = value == "1" ? 1 : 0;
    }
  } else if (args.label != 0 && args.label != 1) {
    throw DataError("either --label 0|1 or --manifest is required");
  }

  std::vector<std::string> files;
  for (const std::string& input : args.inputs) {
    if (fs::is_directory(input)) {
      for (const auto& entry : fs::directory_iterator(input))
        if (entry.is_regular_file()) files.push_back(entry.path().string());
    } else {
      files.push_back(input);
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no input files");

  const YearMonth appeared = YearMonth::parse(args.appeared);
  std::string out;
  std::size_t count = 0;
  for (const std::string& file : files) {
    int label = args.label;
    if (!manifest_labels.empty()) {
      auto it = manifest_labels.find(fs::path(file).filename().string());
      if (it == manifest_labels.end())
        throw DataError(file + ": file is not listed in the manifest");
      label = it->second;
    }
    std::vector<std::uint8_t> bytes = read_binary_file(file);
    ingest::FeatureRecord rec = pe::extract_features(bytes, appeared, label);
    out += ingest::record_to_line(rec);
    out += '\n';
    ++count;
  }
  write_text_file(args.out_file, out);
  std::printf("extracted %zu records -> %s\n", count, args.out_file.c_str());
}

struct BuildGraphsArgs {
  std::vector<std::string> inputs;
  std::string out_file;
  std::string skeleton = "default";
  std::string wiring = "skeleton";
  double similarity_threshold = 0.5;
};

void cmd_build_graphs(const BuildGraphsArgs& args) {
  graph::BuildOptions opts;
  opts.skeleton = graph::resolve_skeleton(args.skeleton);
  if (args.wiring == "skeleton")
    opts.wiring = graph::Wiring::skeleton;
  else if (args.wiring == "similarity")
    opts.wiring = graph::Wiring::similarity;
  else
    throw DataError("wiring must be 'skeleton' or 'similarity'");
  opts.similarity_threshold = args.similarity_threshold;

  std::vector<ingest::FeatureRecord> records = load_records_raw(args.inputs);
  if (records.empty()) throw DataError("no records to build graphs from");
  std::vector<graph::FeatureGraph> graphs;
  graphs.reserve(records.size());
  for (const auto& rec : records) graphs.push_back(graph::build_graph(rec, opts));
  graph::write_graphs(args.out_file, graphs);
  std::printf("built %zu graphs -> %s\n", graphs.size(),
              args.out_file.c_str());
}

struct CvArgs {
  std::string graphs_file;
  std::string config;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void cmd_cv(const CvArgs& args) {
  harness::ExperimentConfig cfg = load_config_or_default(args.config);
  if (args.seed_set) {
    cfg.seed = args.seed;
    cfg.train.seed = args.seed;
  }
  std::vector<graph::FeatureGraph> graphs =
      graph::read_graphs(args.graphs_file);
  harness::CvReport report = harness::run_cv_search(graphs, cfg);

  ensure_dir(args.out_dir);
  write_text_file(join_path(args.out_dir, "cv.csv"),
                  harness::cv_csv(report));
  const harness::CvCellResult& best = report.cells[report.best_index];
  std::printf(
      "best cell: conv_depth=%d conv_channels=%d mlp_layers=%d "
      "mlp_neurons=%d pooling_rate=%s mean_f1=%.6f\n",
      best.cell.conv_depth, best.cell.conv_channels, best.cell.mlp_layers,
      best.cell.mlp_neurons, format_double(best.cell.pooling_rate).c_str(),
      best.mean_f1);
}

struct TrainArgs {
  std::string graphs_file;
  std::string val_file;
  std::string config;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void cmd_train(const TrainArgs& args) {
  harness::ExperimentConfig cfg = load_config_or_default(args.config);
  if (args.seed_set) {
    cfg.seed = args.seed;
    cfg.train.seed = args.seed;
  }
  std::vector<graph::FeatureGraph> train_graphs =
      graph::read_graphs(args.graphs_file);
  std::vector<graph::FeatureGraph> val_graphs;
  if (!args.val_file.empty()) val_graphs = graph::read_graphs(args.val_file);

  harness::TrainOutput out = harness::train_model(train_graphs, val_graphs, cfg);
  for (std::size_t e = 0; e < out.epochs.size(); ++e) {
    if (out.epochs[e].has_val)
      std::printf("epoch %zu: train_loss=%.6f val_f1=%.6f\n", e + 1,
                  out.epochs[e].train_loss, out.epochs[e].val_f1);
    else
      std::printf("epoch %zu: train_loss=%.6f\n", e + 1,
                  out.epochs[e].train_loss);
  }

  ensure_dir(args.out_dir);
  const std::string ckpt_path = join_path(args.out_dir, "checkpoint.bin");
  dgcnn::save_checkpoint(ckpt_path, out.checkpoint);

  std::vector<std::pair<std::string, std::string>> digests;
  digests.emplace_back(args.graphs_file, sha256_file_hex(args.graphs_file));
  if (!args.val_file.empty())
    digests.emplace_back(args.val_file, sha256_file_hex(args.val_file));
  if (!args.config.empty())
    digests.emplace_back(args.config, sha256_file_hex(args.config));

  KvFile manifest = harness::run_manifest(cfg, out, digests, ckpt_path);
  manifest.set("checkpoint_sha256", sha256_file_hex(ckpt_path));
  manifest.save(join_path(args.out_dir, "manifest.txt"));
  std::printf("k=%d wall_clock=%.2fs checkpoint=%s\n", out.checkpoint.k,
              out.wall_seconds, ckpt_path.c_str());
}

struct EvalArgs {
  std::string checkpoint;
  std::string graphs_file;
  std::string tag = "test";
  std::string out_dir;
};

void cmd_eval(const EvalArgs& args) {
  dgcnn::Checkpoint ckpt = dgcnn::load_checkpoint(args.checkpoint);
  std::vector<graph::FeatureGraph> graphs =
      graph::read_graphs(args.graphs_file);
  metrics::MetricsReport report =
      harness::evaluate_model(ckpt, graphs, args.tag);
  std::vector<double> scores = harness::model_scores(ckpt, graphs);
  std::vector<int> truths;
  truths.reserve(graphs.size());
  for (const auto& g : graphs) truths.push_back(g.label);

  write_eval_outputs(args.out_dir, report, scores, truths);
  print_report(report);
}

struct DriftArgs {
  std::string checkpoint;
  std::string graphs_dir;
  std::string holdout_file;
  std::string holdout_month;
  std::string out_dir;
};

void cmd_drift(const DriftArgs& args) {
  dgcnn::Checkpoint ckpt = dgcnn::load_checkpoint(args.checkpoint);

  std::map<YearMonth, std::vector<graph::FeatureGraph>> buckets;
  if (!fs::is_directory(args.graphs_dir))
    throw IoError(args.graphs_dir + ": not a directory");
  for (const auto& entry : fs::directory_iterator(args.graphs_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string stem = entry.path().stem().string();
    if (entry.path().extension() != ".jsonl" || stem.size() < 7) continue;
    YearMonth month{};
    try {
      month = YearMonth::parse(stem.substr(0, 7));
    } catch (const SchemaError&) {
      continue;
    }
    if (buckets.contains(month))
      throw DataError("month " + month.str() + " appears twice in " +
                      args.graphs_dir);
    buckets[month] = graph::read_graphs(entry.path().string());
  }

  if (!args.holdout_file.empty()) {
    if (args.holdout_month.empty())
      throw DataError("--holdout requires --holdout-month");
    const YearMonth month = YearMonth::parse(args.holdout_month);
    if (buckets.contains(month))
      throw DataError("holdout month " + month.str() +
                      " is already present in the graphs directory");
    buckets[month] = graph::read_graphs(args.holdout_file);
  }

  metrics::DriftTable table = harness::run_drift(ckpt, buckets);

  ensure_dir(args.out_dir);
  std::vector<metrics::MetricsReport> reports;
  reports.reserve(table.entries.size());
  for (const auto& e : table.entries) reports.push_back(e.report);
  write_text_file(join_path(args.out_dir, "drift_months.csv"),
                  metrics::report_csv(reports));
  write_text_file(join_path(args.out_dir, "drift_summary.csv"),
                  metrics::drift_summary_csv(table));
  for (const auto& e : table.entries) print_report(e.report);
  std::printf("auc: best=%.5f worst=%.5f degrade=%.3f points\n",
              table.auc.best, table.auc.worst, table.auc.degrade_points);
}

struct BaselineArgs {
  std::string model;
  std::vector<std::string> train_inputs;
  std::vector<std::string> test_inputs;
  std::string out_dir;
  int epochs = -1;
  double lr = -1.0;
  int knn_k = 5;
  int batch_size = 64;
  std::uint64_t seed = 1;
};

void cmd_baseline(const BaselineArgs& args) {
  std::vector<ingest::FeatureRecord> train_recs =
      load_records_raw(args.train_inputs);
  std::vector<ingest::FeatureRecord> test_recs =
      load_records_raw(args.test_inputs);
  if (train_recs.empty()) throw DataError("no training records");
  if (test_recs.empty()) throw DataError("no test records");

  std::vector<baselines::FlatVector> train =
      baselines::flatten_records(train_recs);
  std::vector<baselines::FlatVector> test =
      baselines::flatten_records(test_recs);

  std::vector<double> scores(test.size());
  std::vector<int> preds(test.size());
  if (args.model == "logreg") {
    baselines::LogregConfig cfg;
    if (args.epochs >= 0) cfg.epochs = args.epochs;
    if (args.lr > 0) cfg.lr = args.lr;
    baselines::LogregModel model = baselines::train_logreg(train, cfg);
    for (std::size_t i = 0; i < test.size(); ++i) {
      scores[i] = baselines::logreg_score(model, test[i].values);
      preds[i] = scores[i] > 0.5 ? 1 : 0;
    }
  } else if (args.model == "knn") {
    for (std::size_t i = 0; i < test.size(); ++i) {
      baselines::KnnResult r =
          baselines::knn_predict(train, test[i].values, args.knn_k);
      scores[i] = r.score;
      preds[i] = r.label;
    }
  } else if (args.model == "mlp") {
    baselines::FlatMlpConfig cfg;
    if (args.epochs >= 0) cfg.train.epochs = args.epochs;
    if (args.lr > 0) cfg.train.adam.lr = args.lr;
    cfg.train.batch_size = args.batch_size;
    cfg.train.seed = args.seed;
    baselines::FlatMlpModel model = baselines::train_flat_mlp(train, cfg);
    for (std::size_t i = 0; i < test.size(); ++i) {
      scores[i] = baselines::flat_mlp_score(model, test[i].values);
      preds[i] = scores[i] > 0.5 ? 1 : 0;
    }
  } else {
    throw DataError("model must be logreg, knn or mlp");
  }

  std::vector<int> truths;
  truths.reserve(test.size());
  for (const auto& t : test) truths.push_back(t.label);
  metrics::MetricsReport report =
      metrics::make_report(args.model, preds, scores, truths);
  write_eval_outputs(args.out_dir, report, scores, truths);
  print_report(report);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"malware feature graphs: build, train, evaluate"};
  app.require_subcommand(1);

  IngestArgs ingest_args;
  CLI::App* c_ingest = app.add_subcommand(
      "ingest", "filter labeled records and bucket them by month");
  c_ingest->add_option("--in", ingest_args.inputs, "input .jsonl files or dirs")
      ->required();
  c_ingest->add_option("--out", ingest_args.out_dir, "output directory")
      ->required();
  c_ingest->add_option("--year", ingest_args.year, "calendar year to keep");
  c_ingest->add_option("--split", ingest_args.split_month,
                       "month (YYYY-MM) to split into train/test");
  c_ingest->add_option("--ratio", ingest_args.ratio, "train fraction");
  c_ingest->add_option("--seed", ingest_args.seed, "split seed");
  c_ingest->callback([&] { cmd_ingest(ingest_args); });

  ExtractArgs extract_args;
  CLI::App* c_extract = app.add_subcommand(
      "extract", "extract feature records from binaries");
  c_extract->add_option("--in", extract_args.inputs, "input files or dirs")
      ->required();
  c_extract->add_option("--out", extract_args.out_file, "output .jsonl file")
      ->required();
  c_extract->add_option("--label", extract_args.label, "label for all inputs");
  c_extract->add_option("--manifest", extract_args.manifest,
                        "csv of name,label pairs");
  c_extract->add_option("--appeared", extract_args.appeared,
                        "YYYY-MM stamp for the records");
  c_extract->callback([&] { cmd_extract(extract_args); });

  BuildGraphsArgs build_args;
  CLI::App* c_build = app.add_subcommand(
      "build-graphs", "turn feature records into graph caches");
  c_build->add_option("--in", build_args.inputs, "record files or dirs")
      ->required();
  c_build->add_option("--out", build_args.out_file, "output graph cache")
      ->required();
  c_build->add_option("--skeleton", build_args.skeleton,
                      "default, variant-N or a skeleton file");
  c_build->add_option("--wiring", build_args.wiring,
                      "skeleton or similarity");
  c_build->add_option("--similarity-threshold",
                      build_args.similarity_threshold,
                      "cosine threshold for similarity wiring");
  c_build->callback([&] { cmd_build_graphs(build_args); });

  CvArgs cv_args;
  CLI::App* c_cv =
      app.add_subcommand("cv", "cross-validated hyperparameter search");
  c_cv->add_option("--graphs", cv_args.graphs_file, "graph cache")->required();
  c_cv->add_option("--config", cv_args.config, "experiment config file");
  c_cv->add_option("--out", cv_args.out_dir, "output directory")->required();
  c_cv->add_option("--seed", cv_args.seed, "seed override")
      ->each([&](const std::string&) { cv_args.seed_set = true; });
  c_cv->callback([&] { cmd_cv(cv_args); });

  TrainArgs train_args;
  CLI::App* c_train = app.add_subcommand("train", "train a model");
  c_train->add_option("--graphs", train_args.graphs_file, "training graphs")
      ->required();
  c_train->add_option("--val", train_args.val_file, "validation graphs");
  c_train->add_option("--config", train_args.config, "experiment config file");
  c_train->add_option("--out", train_args.out_dir, "output directory")
      ->required();
  c_train->add_option("--seed", train_args.seed, "seed override")
      ->each([&](const std::string&) { train_args.seed_set = true; });
  c_train->callback([&] { cmd_train(train_args); });

  EvalArgs eval_args;
  CLI::App* c_eval = app.add_subcommand("eval", "evaluate a checkpoint");
  c_eval->add_option("--checkpoint", eval_args.checkpoint, "model checkpoint")
      ->required();
  c_eval->add_option("--graphs", eval_args.graphs_file, "graph cache")
      ->required();
  c_eval->add_option("--tag", eval_args.tag, "dataset tag in the report");
  c_eval->add_option("--out", eval_args.out_dir, "output directory")
      ->required();
  c_eval->callback([&] { cmd_eval(eval_args); });

  DriftArgs drift_args;
  CLI::App* c_drift = app.add_subcommand(
      "drift", "evaluate a checkpoint across month buckets");
  c_drift->add_option("--checkpoint", drift_args.checkpoint,
                      "model checkpoint")
      ->required();
  c_drift->add_option("--graphs-dir", drift_args.graphs_dir,
                      "directory of YYYY-MM graph caches")
      ->required();
  c_drift->add_option("--holdout", drift_args.holdout_file,
                      "extra graph cache evaluated as its own bucket");
  c_drift->add_option("--holdout-month", drift_args.holdout_month,
                      "YYYY-MM tag for --holdout");
  c_drift->add_option("--out", drift_args.out_dir, "output directory")
      ->required();
  c_drift->callback([&] { cmd_drift(drift_args); });

  BaselineArgs baseline_args;
  CLI::App* c_baseline = app.add_subcommand(
      "baseline", "train and evaluate a flat-vector baseline");
  c_baseline
      ->add_option("--model", baseline_args.model, "logreg, knn or mlp")
      ->required();
  c_baseline
      ->add_option("--train", baseline_args.train_inputs, "training records")
      ->required();
  c_baseline->add_option("--test", baseline_args.test_inputs, "test records")
      ->required();
  c_baseline->add_option("--out", baseline_args.out_dir, "output directory")
      ->required();
  c_baseline->add_option("--epochs", baseline_args.epochs, "training epochs");
  c_baseline->add_option("--lr", baseline_args.lr, "learning rate");
  c_baseline->add_option("--knn-k", baseline_args.knn_k, "neighbors for knn");
  c_baseline->add_option("--batch-size", baseline_args.batch_size,
                         "minibatch size for mlp");
  c_baseline->add_option("--seed", baseline_args.seed, "training seed");
  c_baseline->callback([&] { cmd_baseline(baseline_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::usage);
  } catch (const IoError& e) {
    std::fprintf(stderr, "mfgraph: %s\n", e.what());
    return static_cast<int>(ExitCode::io);
  } catch (const SchemaError& e) {
    std::fprintf(stderr, "mfgraph: %s\n", e.what());
    return static_cast<int>(ExitCode::schema);
  } catch (const DataError& e) {
    std::fprintf(stderr, "mfgraph: %s\n", e.what());
    return static_cast<int>(ExitCode::data);
  } catch (const CompatError& e) {
    std::fprintf(stderr, "mfgraph: %s\n", e.what());
    return static_cast<int>(ExitCode::compat);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "mfgraph: %s\n", e.what());
    return static_cast<int>(ExitCode::failure);
  }
  return static_cast<int>(ExitCode::ok);
}
