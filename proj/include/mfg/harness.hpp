#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mfg/dgcnn.hpp"
#include "mfg/graph.hpp"
#include "mfg/metrics.hpp"
#include "mfg/month.hpp"
#include "mfg/textio.hpp"

namespace mfg::harness {

// Hyperparameter search axes; the cross product of the lists is the grid.
struct GridSpec {
  std::vector<int> conv_depth = {3};
  std::vector<int> conv_channels = {32, 48};
  std::vector<int> mlp_layers = {2, 3};  // weight layers, output included
  std::vector<int> mlp_neurons = {512, 1024};
  std::vector<double> pooling_rate = {0.6, 0.75};

  void validate() const;
};

struct GridCell {
  int conv_depth = 3;
  int conv_channels = 48;
  int mlp_layers = 3;
  int mlp_neurons = 1024;
  double pooling_rate = 0.75;
};

std::vector<GridCell> expand_grid(const GridSpec& grid);
dgcnn::DgcnnConfig apply_cell(dgcnn::DgcnnConfig base, const GridCell& cell);

struct ExperimentConfig {
  std::uint64_t seed = 1;
  int cv_folds = 5;
  std::string skeleton = "default";
  graph::Wiring wiring = graph::Wiring::skeleton;
  double similarity_threshold = 0.5;
  graph::NodeEncoderConfig encoder;
  dgcnn::DgcnnConfig model;
  dgcnn::TrainConfig train;
  GridSpec grid;

  void validate() const;
};

// Plain key = value text; unknown keys are rejected so typos surface.
ExperimentConfig experiment_config_from_kv(const KvFile& kv);
ExperimentConfig load_experiment_config(const std::string& path);
KvFile experiment_config_to_kv(const ExperimentConfig& cfg);

graph::BuildOptions build_options(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Cross-validation search

// Per-class shuffle, round-robin assignment; every sample lands in exactly
// one fold and each fold keeps both classes.
std::vector<std::vector<std::size_t>> stratified_folds(
    std::span<const graph::FeatureGraph> graphs, int folds,
    std::uint64_t seed);

struct CvCellResult {
  GridCell cell;
  std::vector<double> fold_f1;  // best-epoch validation F1 per fold
  double mean_f1 = 0.0;
};

struct CvReport {
  std::vector<CvCellResult> cells;
  std::size_t best_index = 0;
};

CvReport run_cv_search(std::span<const graph::FeatureGraph> graphs,
                       const ExperimentConfig& cfg);
std::string cv_csv(const CvReport& report);

// ---------------------------------------------------------------------------
// Training, evaluation, drift

struct TrainOutput {
  dgcnn::Checkpoint checkpoint;
  std::vector<dgcnn::EpochLog> epochs;
  double wall_seconds = 0.0;
};

TrainOutput train_model(std::span<const graph::FeatureGraph> train_graphs,
                        std::span<const graph::FeatureGraph> val_graphs,
                        const ExperimentConfig& cfg);

// Config echo, content digests of every input file, derived k, wall clock,
// per-epoch losses. Plain key = value text next to the checkpoint.
KvFile run_manifest(
    const ExperimentConfig& cfg, const TrainOutput& out,
    std::span<const std::pair<std::string, std::string>> input_digests,
    const std::string& checkpoint_path);

std::vector<double> model_scores(const dgcnn::Checkpoint& ckpt,
                                 std::span<const graph::FeatureGraph> graphs);

metrics::MetricsReport evaluate_model(
    const dgcnn::Checkpoint& ckpt,
    std::span<const graph::FeatureGraph> graphs, const std::string& tag);

// Chronological per-month evaluation through the same scoring path as
// evaluate_model, then the degradation bands.
metrics::DriftTable run_drift(
    const dgcnn::Checkpoint& ckpt,
    const std::map<YearMonth, std::vector<graph::FeatureGraph>>& buckets);

}  // namespace mfg::harness
