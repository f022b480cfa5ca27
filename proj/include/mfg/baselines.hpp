#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "mfg/dgcnn.hpp"
#include "mfg/graph.hpp"
#include "mfg/ingest.hpp"

namespace mfg::baselines {

// A record flattened to one vector: the nine feature-group blocks laid out
// back to back (9 x 256 = 2304 values), no per-node structure.
struct FlatVector {
  Eigen::VectorXd values;
  int label = 0;
  std::string sha256;
};

constexpr int kFlatWidth = 9 * graph::kBaseWidth;

FlatVector flatten_record(const ingest::FeatureRecord& rec,
                          const graph::NodeEncoderConfig& enc = {});
std::vector<FlatVector> flatten_records(
    std::span<const ingest::FeatureRecord> recs,
    const graph::NodeEncoderConfig& enc = {});

// ---------------------------------------------------------------------------
// Logistic regression, full-batch gradient descent from zero weights.

struct LogregConfig {
  int epochs = 500;
  double lr = 0.1;
};

struct LogregModel {
  Eigen::VectorXd w;
  double b = 0.0;
};

LogregModel train_logreg(std::span<const FlatVector> train,
                         const LogregConfig& cfg = {});
double logreg_score(const LogregModel& model, const Eigen::VectorXd& x);

// ---------------------------------------------------------------------------
// k-nearest neighbors, Euclidean distance, distance then index as the order.

struct KnnResult {
  double score = 0.0;  // fraction of positive labels among the k nearest
  int label = 0;       // ties at exactly 0.5 go to the nearest neighbor
};

KnnResult knn_predict(std::span<const FlatVector> train,
                      const Eigen::VectorXd& query, int k);

// ---------------------------------------------------------------------------
// Flat MLP over the 2304-wide vectors; same layer machinery as the graph
// model's head.

struct FlatMlpConfig {
  std::vector<int> hidden = {1024, 1024};
  double dropout = 0.5;
  int classes = 2;
  dgcnn::TrainConfig train;
};

struct FlatMlpModel {
  int input_width = kFlatWidth;
  std::vector<int> hidden;
  int classes = 2;
  dgcnn::MlpParams mlp;
};

FlatMlpModel train_flat_mlp(std::span<const FlatVector> train,
                            const FlatMlpConfig& cfg);
double flat_mlp_score(const FlatMlpModel& model, const Eigen::VectorXd& x);

}  // namespace mfg::baselines
