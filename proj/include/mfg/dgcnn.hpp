#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mfg/graph.hpp"
#include "mfg/rng.hpp"

namespace mfg::dgcnn {

enum class Activation : int {
  identity = 0,
  tanh = 1,
};

struct DgcnnConfig {
  int input_width = graph::kAttrWidth;
  std::vector<int> conv_channels = {48, 48, 48};
  Activation conv_act = Activation::tanh;
  Activation agg_act = Activation::tanh;
  double pooling_rate = 0.75;
  int k = 0;  // > 0 pins the pooled size; 0 derives it from training graphs
  std::vector<int> mlp_hidden = {1024, 1024};
  double dropout = 0.5;
  int classes = 2;

  // Width of the concatenated convolution output, the row size fed to
  // sort pooling.
  int concat_width() const;
  void validate() const;  // DataError on nonsensical dimensions
};

// Multilayer perceptron with tanh hidden units; weights are fan_in x fan_out
// so activations are row vectors. w/b include the output layer.
struct MlpParams {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;
};

struct ModelParams {
  std::vector<Eigen::MatrixXd> conv_w;  // c_{t} x c_{t+1}
  Eigen::RowVectorXd agg_w;             // 1 x k
  MlpParams mlp;
};

ModelParams init_params(const DgcnnConfig& cfg, int k, Rng& rng);
std::int64_t param_count(const DgcnnConfig& cfg, int k);
Eigen::VectorXd flatten(const ModelParams& p);
ModelParams unflatten(const DgcnnConfig& cfg, int k, const Eigen::VectorXd& v);

MlpParams init_mlp(int input_width, std::span<const int> hidden, int classes,
                   Rng& rng);
std::int64_t mlp_param_count(int input_width, std::span<const int> hidden,
                             int classes);
Eigen::VectorXd flatten_mlp(const MlpParams& p);
MlpParams unflatten_mlp(int input_width, std::span<const int> hidden,
                        int classes, const Eigen::VectorXd& v);

// Row-normalized adjacency with self loops: row i holds 1/deg~(i) at i's
// neighbors and itself. Every row sums to 1.
Eigen::MatrixXd normalized_adjacency(
    int n, std::span<const std::pair<int, int>> edges);

// One propagation: act(D~^-1 A~ X W).
Eigen::MatrixXd propagate(const Eigen::MatrixXd& x,
                          std::span<const std::pair<int, int>> edges,
                          const Eigen::MatrixXd& w, Activation act);

// Stacked propagations; returns [Z^1 | Z^2 | ... | Z^h], n x concat_width.
Eigen::MatrixXd forward_conv_stack(const Eigen::MatrixXd& x,
                                   std::span<const std::pair<int, int>> edges,
                                   const ModelParams& params,
                                   const DgcnnConfig& cfg);

// Rows sorted by the last column descending, ties broken by the columns to
// its left, then by original row index; truncated or zero-padded to k rows.
Eigen::MatrixXd sort_pool(const Eigen::MatrixXd& z_cat, int k);
// Original indices of the retained rows, in pooled order (size min(k, n)).
std::vector<int> sort_pool_order(const Eigen::MatrixXd& z_cat, int k);

// Graph embedding: act(w  Z_sp), a single pooled-row mix per feature column.
Eigen::RowVectorXd aggregate(const Eigen::MatrixXd& z_sp,
                             const Eigen::RowVectorXd& w, Activation act);

// Scaled dropout masks, one per hidden layer; entries are 0 or 1/(1-p).
// A null mask pointer anywhere below means inference (no dropout).
struct DropoutMasks {
  std::vector<Eigen::RowVectorXd> layers;
};
DropoutMasks sample_dropout_masks(const DgcnnConfig& cfg, Rng& rng);

Eigen::VectorXd mlp_forward(const Eigen::RowVectorXd& e, const MlpParams& mlp,
                            const DropoutMasks* masks);

// Cross entropy against the true label, probabilities clamped at 1e-12.
double loss(const Eigen::VectorXd& probs, int label);

// ---------------------------------------------------------------------------
// Traced forward / analytic backward

struct GraphTrace {
  Eigen::MatrixXd p;                 // normalized adjacency
  std::vector<Eigen::MatrixXd> z;    // z[0] = X, ..., z[h]
  std::vector<Eigen::MatrixXd> pz;   // pz[t] = p * z[t], t < h
  std::vector<int> order;            // retained original rows, pooled order
  Eigen::MatrixXd z_sp;              // k x F
  Eigen::RowVectorXd u;              // pre-activation embedding
  Eigen::RowVectorXd e_g;            // graph embedding
};

GraphTrace forward_graph(const graph::FeatureGraph& g,
                         const ModelParams& params, const DgcnnConfig& cfg,
                         int k);

struct ForwardTrace {
  GraphTrace graph;
  std::vector<Eigen::RowVectorXd> mlp_in;   // input to each weight layer
  std::vector<Eigen::RowVectorXd> mlp_act;  // tanh outputs per hidden layer
  DropoutMasks masks;                       // empty layers means inference
  Eigen::RowVectorXd logits;
  Eigen::VectorXd probs;
};

ForwardTrace forward(const graph::FeatureGraph& g, const ModelParams& params,
                     const DgcnnConfig& cfg, int k,
                     const DropoutMasks* masks = nullptr);

// Analytic gradients of loss(forward(...), label) for every parameter
// tensor. The sort permutation is treated as fixed. dz_cat_out, when given,
// receives the gradient reaching the concatenated convolution output.
ModelParams backward(const ForwardTrace& trace, const graph::FeatureGraph& g,
                     int label, const ModelParams& params,
                     const DgcnnConfig& cfg, int k,
                     Eigen::MatrixXd* dz_cat_out = nullptr);

double predict_score(const graph::FeatureGraph& g, const ModelParams& params,
                     const DgcnnConfig& cfg, int k);

// ---------------------------------------------------------------------------
// Batch MLP path (shared with the flat baseline)

struct MlpBatchTrace {
  Eigen::MatrixXd input;               // B x F
  std::vector<Eigen::MatrixXd> act;    // tanh outputs per hidden layer
  std::vector<Eigen::MatrixXd> drop;   // after dropout
  std::vector<Eigen::MatrixXd> mask;   // scaled masks; empty means inference
  Eigen::MatrixXd logits;
  Eigen::MatrixXd probs;
};

MlpBatchTrace mlp_forward_batch(Eigen::MatrixXd input, const MlpParams& mlp,
                                const std::vector<Eigen::MatrixXd>* masks);

// Per-hidden-layer B x width masks, sampled row by row so per-sample draws
// match sample_dropout_masks consumption.
std::vector<Eigen::MatrixXd> sample_dropout_masks_batch(
    std::span<const int> hidden, double dropout, int batch, Rng& rng);

struct MlpBatchGrads {
  MlpParams grads;
  Eigen::MatrixXd d_input;  // B x F
};

// Gradients of the mean cross entropy over the batch.
MlpBatchGrads mlp_backward_batch(const MlpBatchTrace& trace,
                                 std::span<const int> labels,
                                 const MlpParams& mlp);

double mean_loss(const Eigen::MatrixXd& probs, std::span<const int> labels);

// ---------------------------------------------------------------------------
// Optimizer and training

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  Eigen::VectorXd m, v;
  long t = 0;

  explicit AdamState(AdamConfig c = {}) : cfg(c) {}
};

// Bias-corrected update, applied in place.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads,
               AdamState& state);

struct TrainConfig {
  int epochs = 20;
  int batch_size = 64;
  AdamConfig adam;
  std::uint64_t seed = 1;  // master seed; sub-streams are derived from it
};

struct EpochLog {
  double train_loss = 0.0;
  double val_f1 = 0.0;
  bool has_val = false;
};

struct TrainResult {
  ModelParams params;
  int k = 0;
  std::vector<EpochLog> epochs;
};

using EpochCallback = std::function<void(int epoch, const EpochLog&)>;

// Shuffled minibatches, Adam, mean batch loss; per-epoch validation F1 at
// threshold 0.5 when a validation set is given.
TrainResult train(std::span<const graph::FeatureGraph> train_graphs,
                  std::span<const graph::FeatureGraph> val_graphs,
                  const DgcnnConfig& cfg, const TrainConfig& tc,
                  const EpochCallback& on_epoch = nullptr);

// ---------------------------------------------------------------------------
// Checkpoints: versioned binary, little endian, bit-exact round trip.

struct Checkpoint {
  DgcnnConfig cfg;
  int k = 0;
  TrainConfig train_echo;
  ModelParams params;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);  // CompatError

}  // namespace mfg::dgcnn
