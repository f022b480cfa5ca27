#include "mfg/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <set>
#include <stdexcept>

#include "mfg/errors.hpp"
#include "mfg/rng.hpp"

namespace mfg::harness {

namespace {

std::vector<int> to_int_list(const KvFile& kv, std::string_view key,
                             std::vector<int> fallback) {
  if (!kv.has(key)) return fallback;
  std::vector<int> out;
  for (const std::string& item : kv.get_list(key)) {
    try {
      std::size_t used = 0;
      long long v = std::stoll(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(static_cast<int>(v));
    } catch (const std::exception&) {
      throw SchemaError(std::string(key) + ": bad integer '" + item + "'");
    }
  }
  return out;
}

std::vector<double> to_double_list(const KvFile& kv, std::string_view key,
                                   std::vector<double> fallback) {
  if (!kv.has(key)) return fallback;
  std::vector<double> out;
  for (const std::string& item : kv.get_list(key)) {
    try {
      std::size_t used = 0;
      double v = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw SchemaError(std::string(key) + ": bad number '" + item + "'");
    }
  }
  return out;
}

std::uint64_t to_u64(const KvFile& kv, std::string_view key,
                     std::uint64_t fallback) {
  const std::string* raw = kv.find(key);
  if (!raw) return fallback;
  try {
    std::size_t used = 0;
    std::uint64_t v = std::stoull(*raw, &used);
    if (used != raw->size()) throw std::invalid_argument(*raw);
    return v;
  } catch (const std::exception&) {
    throw SchemaError(std::string(key) + ": bad unsigned integer '" + *raw +
                      "'");
  }
}

std::string format_f1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::vector<std::string> int_list_strings(std::span<const int> values) {
  std::vector<std::string> out;
  out.reserve(values.size());
  for (int v : values) out.push_back(std::to_string(v));
  return out;
}

std::vector<std::string> double_list_strings(std::span<const double> values) {
  std::vector<std::string> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(format_double(v));
  return out;
}

const std::set<std::string, std::less<>>& known_config_keys() {
  static const std::set<std::string, std::less<>> keys = {
      "seed",           "cv_folds",        "skeleton",
      "wiring",         "similarity_threshold",
      "api_buckets",    "export_buckets",  "section_buckets",
      "header_buckets", "conv_channels",   "pooling_rate",
      "k",              "mlp_hidden",      "dropout",
      "classes",        "epochs",          "batch_size",
      "lr",             "beta1",           "beta2",
      "eps",            "grid.conv_depth", "grid.conv_channels",
      "grid.mlp_layers", "grid.mlp_neurons", "grid.pooling_rate",
  };
  return keys;
}

}  // namespace

void GridSpec::validate() const {
  auto positive = [](std::span<const int> values, const char* what) {
    if (values.empty())
      throw DataError(std::string(what) + " grid axis is empty");
    for (int v : values)
      if (v < 1) throw DataError(std::string(what) + " must be positive");
  };
  positive(conv_depth, "conv_depth");
  positive(conv_channels, "conv_channels");
  positive(mlp_layers, "mlp_layers");
  positive(mlp_neurons, "mlp_neurons");
  if (pooling_rate.empty()) throw DataError("pooling_rate grid axis is empty");
  for (double r : pooling_rate)
    if (!(r > 0.0 && r <= 1.0))
      throw DataError("pooling_rate must lie in (0, 1]");
}

std::vector<GridCell> expand_grid(const GridSpec& grid) {
  grid.validate();
  std::vector<GridCell> cells;
  for (int depth : grid.conv_depth)
    for (int channels : grid.conv_channels)
      for (int layers : grid.mlp_layers)
        for (int neurons : grid.mlp_neurons)
          for (double rate : grid.pooling_rate)
            cells.push_back({depth, channels, layers, neurons, rate});
  return cells;
}

dgcnn::DgcnnConfig apply_cell(dgcnn::DgcnnConfig base, const GridCell& cell) {
  if (cell.conv_depth < 1 || cell.conv_channels < 1 || cell.mlp_layers < 1 ||
      cell.mlp_neurons < 1)
    throw DataError("grid cell values must be positive");
  if (!(cell.pooling_rate > 0.0 && cell.pooling_rate <= 1.0))
    throw DataError("pooling_rate must lie in (0, 1]");
  base.conv_channels.assign(static_cast<std::size_t>(cell.conv_depth),
                            cell.conv_channels);
  base.mlp_hidden.assign(static_cast<std::size_t>(cell.mlp_layers - 1),
                         cell.mlp_neurons);
  base.pooling_rate = cell.pooling_rate;
  base.k = 0;
  return base;
}

void ExperimentConfig::validate() const {
  if (cv_folds < 2) throw DataError("cv_folds must be at least 2");
  if (!(similarity_threshold >= -1.0 && similarity_threshold <= 1.0))
    throw DataError("similarity_threshold must lie in [-1, 1]");
  auto bucket_check = [](int v, int cap, const char* what) {
    if (v < 1 || v > cap)
      throw DataError(std::string(what) + " must lie in [1, " +
                      std::to_string(cap) + "]");
  };
  bucket_check(encoder.api_buckets, 128, "api_buckets");
  bucket_check(encoder.export_buckets, 128, "export_buckets");
  bucket_check(encoder.section_buckets, 64, "section_buckets");
  bucket_check(encoder.header_buckets, 64, "header_buckets");
  model.validate();
  if (train.epochs < 0) throw DataError("epochs must be non-negative");
  if (train.batch_size < 1) throw DataError("batch_size must be positive");
  grid.validate();
}

ExperimentConfig experiment_config_from_kv(const KvFile& kv) {
  for (const auto& [key, value] : kv.entries()) {
    if (!known_config_keys().contains(key))
      throw SchemaError("unknown config key '" + key + "'");
  }

  ExperimentConfig cfg;
  cfg.seed = to_u64(kv, "seed", cfg.seed);
  cfg.cv_folds = static_cast<int>(kv.get_int("cv_folds", cfg.cv_folds));
  cfg.skeleton = kv.get("skeleton", cfg.skeleton);

  const std::string wiring = kv.get("wiring", "skeleton");
  if (wiring == "skeleton")
    cfg.wiring = graph::Wiring::skeleton;
  else if (wiring == "similarity")
    cfg.wiring = graph::Wiring::similarity;
  else
    throw SchemaError("wiring must be 'skeleton' or 'similarity'");
  cfg.similarity_threshold =
      kv.get_double("similarity_threshold", cfg.similarity_threshold);

  cfg.encoder.api_buckets =
      static_cast<int>(kv.get_int("api_buckets", cfg.encoder.api_buckets));
  cfg.encoder.export_buckets = static_cast<int>(
      kv.get_int("export_buckets", cfg.encoder.export_buckets));
  cfg.encoder.section_buckets = static_cast<int>(
      kv.get_int("section_buckets", cfg.encoder.section_buckets));
  cfg.encoder.header_buckets = static_cast<int>(
      kv.get_int("header_buckets", cfg.encoder.header_buckets));

  cfg.model.conv_channels =
      to_int_list(kv, "conv_channels", cfg.model.conv_channels);
  cfg.model.pooling_rate =
      kv.get_double("pooling_rate", cfg.model.pooling_rate);
  cfg.model.k = static_cast<int>(kv.get_int("k", cfg.model.k));
  cfg.model.mlp_hidden = to_int_list(kv, "mlp_hidden", cfg.model.mlp_hidden);
  cfg.model.dropout = kv.get_double("dropout", cfg.model.dropout);
  cfg.model.classes = static_cast<int>(kv.get_int("classes", cfg.model.classes));

  cfg.train.epochs = static_cast<int>(kv.get_int("epochs", cfg.train.epochs));
  cfg.train.batch_size =
      static_cast<int>(kv.get_int("batch_size", cfg.train.batch_size));
  cfg.train.adam.lr = kv.get_double("lr", cfg.train.adam.lr);
  cfg.train.adam.beta1 = kv.get_double("beta1", cfg.train.adam.beta1);
  cfg.train.adam.beta2 = kv.get_double("beta2", cfg.train.adam.beta2);
  cfg.train.adam.eps = kv.get_double("eps", cfg.train.adam.eps);
  cfg.train.seed = cfg.seed;

  cfg.grid.conv_depth =
      to_int_list(kv, "grid.conv_depth", cfg.grid.conv_depth);
  cfg.grid.conv_channels =
      to_int_list(kv, "grid.conv_channels", cfg.grid.conv_channels);
  cfg.grid.mlp_layers =
      to_int_list(kv, "grid.mlp_layers", cfg.grid.mlp_layers);
  cfg.grid.mlp_neurons =
      to_int_list(kv, "grid.mlp_neurons", cfg.grid.mlp_neurons);
  cfg.grid.pooling_rate =
      to_double_list(kv, "grid.pooling_rate", cfg.grid.pooling_rate);

  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  return experiment_config_from_kv(KvFile::load(path));
}

KvFile experiment_config_to_kv(const ExperimentConfig& cfg) {
  KvFile kv;
  kv.set("seed", std::to_string(cfg.seed));
  kv.set_int("cv_folds", cfg.cv_folds);
  kv.set("skeleton", cfg.skeleton);
  kv.set("wiring",
         cfg.wiring == graph::Wiring::skeleton ? "skeleton" : "similarity");
  kv.set_double("similarity_threshold", cfg.similarity_threshold);
  kv.set_int("api_buckets", cfg.encoder.api_buckets);
  kv.set_int("export_buckets", cfg.encoder.export_buckets);
  kv.set_int("section_buckets", cfg.encoder.section_buckets);
  kv.set_int("header_buckets", cfg.encoder.header_buckets);
  kv.set_list("conv_channels", int_list_strings(cfg.model.conv_channels));
  kv.set_double("pooling_rate", cfg.model.pooling_rate);
  kv.set_int("k", cfg.model.k);
  kv.set_list("mlp_hidden", int_list_strings(cfg.model.mlp_hidden));
  kv.set_double("dropout", cfg.model.dropout);
  kv.set_int("classes", cfg.model.classes);
  kv.set_int("epochs", cfg.train.epochs);
  kv.set_int("batch_size", cfg.train.batch_size);
  kv.set_double("lr", cfg.train.adam.lr);
  kv.set_double("beta1", cfg.train.adam.beta1);
  kv.set_double("beta2", cfg.train.adam.beta2);
  kv.set_double("eps", cfg.train.adam.eps);
  kv.set_list("grid.conv_depth", int_list_strings(cfg.grid.conv_depth));
  kv.set_list("grid.conv_channels", int_list_strings(cfg.grid.conv_channels));
  kv.set_list("grid.mlp_layers", int_list_strings(cfg.grid.mlp_layers));
  kv.set_list("grid.mlp_neurons", int_list_strings(cfg.grid.mlp_neurons));
  kv.set_list("grid.pooling_rate",
              double_list_strings(cfg.grid.pooling_rate));
  return kv;
}

graph::BuildOptions build_options(const ExperimentConfig& cfg) {
  graph::BuildOptions opts;
  opts.skeleton = graph::resolve_skeleton(cfg.skeleton);
  opts.encoder = cfg.encoder;
  opts.wiring = cfg.wiring;
  opts.similarity_threshold = cfg.similarity_threshold;
  return opts;
}

std::vector<std::vector<std::size_t>> stratified_folds(
    std::span<const graph::FeatureGraph> graphs, int folds,
    std::uint64_t seed) {
  if (folds < 2) throw DataError("folds must be at least 2");
  std::vector<std::size_t> neg, pos;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    if (graphs[i].label == 0)
      neg.push_back(i);
    else if (graphs[i].label == 1)
      pos.push_back(i);
    else
      throw DataError("labels must be 0 or 1 for stratified folds");
  }
  if (neg.size() < static_cast<std::size_t>(folds) ||
      pos.size() < static_cast<std::size_t>(folds))
    throw DataError("insufficient data for stratified folds");

  Rng rng(derive_seed(seed, SeedStream::folds));
  rng.shuffle(neg);
  rng.shuffle(pos);

  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(folds));
  for (std::size_t i = 0; i < neg.size(); ++i)
    out[i % static_cast<std::size_t>(folds)].push_back(neg[i]);
  for (std::size_t i = 0; i < pos.size(); ++i)
    out[i % static_cast<std::size_t>(folds)].push_back(pos[i]);
  for (auto& fold : out) std::sort(fold.begin(), fold.end());
  return out;
}

CvReport run_cv_search(std::span<const graph::FeatureGraph> graphs,
                       const ExperimentConfig& cfg) {
  cfg.validate();
  const std::vector<GridCell> cells = expand_grid(cfg.grid);
  const int folds = cfg.cv_folds;
  const auto assignment = stratified_folds(graphs, folds, cfg.seed);

  CvReport report;
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    CvCellResult cell_result;
    cell_result.cell = cells[ci];
    const dgcnn::DgcnnConfig cell_cfg = apply_cell(cfg.model, cells[ci]);

    double sum = 0.0;
    for (int fi = 0; fi < folds; ++fi) {
      std::vector<char> held(graphs.size(), 0);
      for (std::size_t idx : assignment[static_cast<std::size_t>(fi)])
        held[idx] = 1;
      std::vector<graph::FeatureGraph> train_set, val_set;
      for (std::size_t i = 0; i < graphs.size(); ++i)
        (held[i] ? val_set : train_set).push_back(graphs[i]);

      dgcnn::TrainConfig tc = cfg.train;
      tc.seed = derive_seed(
          cfg.seed, SeedStream::folds,
          1 + ci * static_cast<std::size_t>(folds) +
              static_cast<std::size_t>(fi));
      dgcnn::TrainResult tr = dgcnn::train(train_set, val_set, cell_cfg, tc);

      double best = 0.0;
      for (const auto& e : tr.epochs)
        if (e.has_val) best = std::max(best, e.val_f1);
      cell_result.fold_f1.push_back(best);
      sum += best;
    }
    cell_result.mean_f1 = sum / static_cast<double>(folds);
    report.cells.push_back(std::move(cell_result));
  }

  report.best_index = 0;
  for (std::size_t i = 1; i < report.cells.size(); ++i)
    if (report.cells[i].mean_f1 > report.cells[report.best_index].mean_f1)
      report.best_index = i;
  return report;
}

std::string cv_csv(const CvReport& report) {
  std::string out =
      "conv_depth,conv_channels,mlp_layers,mlp_neurons,pooling_rate,mean_f1";
  const std::size_t folds =
      report.cells.empty() ? 0 : report.cells.front().fold_f1.size();
  for (std::size_t f = 1; f <= folds; ++f)
    out += ",fold_" + std::to_string(f) + "_f1";
  out += "\n";
  for (const auto& cell : report.cells) {
    out += std::to_string(cell.cell.conv_depth) + ",";
    out += std::to_string(cell.cell.conv_channels) + ",";
    out += std::to_string(cell.cell.mlp_layers) + ",";
    out += std::to_string(cell.cell.mlp_neurons) + ",";
    out += format_double(cell.cell.pooling_rate) + ",";
    out += format_f1(cell.mean_f1);
    for (double f1 : cell.fold_f1) out += "," + format_f1(f1);
    out += "\n";
  }
  return out;
}

TrainOutput train_model(std::span<const graph::FeatureGraph> train_graphs,
                        std::span<const graph::FeatureGraph> val_graphs,
                        const ExperimentConfig& cfg) {
  cfg.validate();
  dgcnn::TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;

  const auto started = std::chrono::steady_clock::now();
  dgcnn::TrainResult tr = dgcnn::train(train_graphs, val_graphs, cfg.model, tc);
  const auto finished = std::chrono::steady_clock::now();

  TrainOutput out;
  out.checkpoint.cfg = cfg.model;
  out.checkpoint.k = tr.k;
  out.checkpoint.train_echo = tc;
  out.checkpoint.params = std::move(tr.params);
  out.epochs = std::move(tr.epochs);
  out.wall_seconds =
      std::chrono::duration<double>(finished - started).count();
  return out;
}

KvFile run_manifest(
    const ExperimentConfig& cfg, const TrainOutput& out,
    std::span<const std::pair<std::string, std::string>> input_digests,
    const std::string& checkpoint_path) {
  KvFile kv = experiment_config_to_kv(cfg);
  kv.set_int("derived_k", out.checkpoint.k);
  kv.set("checkpoint", checkpoint_path);
  kv.set_double("wall_clock_seconds", out.wall_seconds);
  for (std::size_t i = 0; i < input_digests.size(); ++i) {
    const std::string prefix = "input." + std::to_string(i + 1);
    kv.set(prefix + ".path", input_digests[i].first);
    kv.set(prefix + ".sha256", input_digests[i].second);
  }
  for (std::size_t e = 0; e < out.epochs.size(); ++e) {
    const std::string prefix = "epoch." + std::to_string(e + 1);
    kv.set(prefix + ".train_loss", format_double(out.epochs[e].train_loss));
    if (out.epochs[e].has_val)
      kv.set(prefix + ".val_f1", format_double(out.epochs[e].val_f1));
  }
  return kv;
}

std::vector<double> model_scores(const dgcnn::Checkpoint& ckpt,
                                 std::span<const graph::FeatureGraph> graphs) {
  std::vector<double> scores;
  scores.reserve(graphs.size());
  for (const auto& g : graphs)
    scores.push_back(dgcnn::predict_score(g, ckpt.params, ckpt.cfg, ckpt.k));
  return scores;
}

metrics::MetricsReport evaluate_model(
    const dgcnn::Checkpoint& ckpt,
    std::span<const graph::FeatureGraph> graphs, const std::string& tag) {
  if (graphs.empty()) throw DataError("no graphs to evaluate");
  const std::vector<double> scores = model_scores(ckpt, graphs);
  std::vector<int> preds, truths;
  preds.reserve(graphs.size());
  truths.reserve(graphs.size());
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    preds.push_back(scores[i] > 0.5 ? 1 : 0);
    truths.push_back(graphs[i].label);
  }
  return metrics::make_report(tag, preds, scores, truths);
}

metrics::DriftTable run_drift(
    const dgcnn::Checkpoint& ckpt,
    const std::map<YearMonth, std::vector<graph::FeatureGraph>>& buckets) {
  if (buckets.size() < 2)
    throw DataError("drift evaluation needs at least two month buckets");
  std::vector<metrics::DriftEntry> entries;
  entries.reserve(buckets.size());
  for (const auto& [month, graphs] : buckets)
    entries.push_back({month, evaluate_model(ckpt, graphs, month.str())});
  return metrics::drift_table(std::move(entries));
}

}  // namespace mfg::harness
