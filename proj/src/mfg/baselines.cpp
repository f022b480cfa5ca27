#include "mfg/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mfg/errors.hpp"
#include "mfg/rng.hpp"

namespace mfg::baselines {

namespace {

constexpr graph::NodeType kMajorOrder[] = {
    graph::NodeType::general,        graph::NodeType::header,
    graph::NodeType::imported,       graph::NodeType::exported,
    graph::NodeType::section,        graph::NodeType::byte_histogram,
    graph::NodeType::byte_entropy,   graph::NodeType::strings,
    graph::NodeType::data_directories,
};

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void check_width(std::span<const FlatVector> rows) {
  for (const auto& r : rows)
    if (r.values.size() != kFlatWidth)
      throw CompatError("flat vector width does not match the model");
}

}  // namespace

FlatVector flatten_record(const ingest::FeatureRecord& rec,
                          const graph::NodeEncoderConfig& enc) {
  FlatVector out;
  out.values.resize(kFlatWidth);
  Eigen::Index off = 0;
  for (graph::NodeType t : kMajorOrder) {
    out.values.segment(off, graph::kBaseWidth) =
        graph::encode_major_block(rec, t, enc);
    off += graph::kBaseWidth;
  }
  out.label = rec.label;
  out.sha256 = rec.sha256;
  return out;
}

std::vector<FlatVector> flatten_records(
    std::span<const ingest::FeatureRecord> recs,
    const graph::NodeEncoderConfig& enc) {
  std::vector<FlatVector> out;
  out.reserve(recs.size());
  for (const auto& r : recs) out.push_back(flatten_record(r, enc));
  return out;
}

LogregModel train_logreg(std::span<const FlatVector> train,
                         const LogregConfig& cfg) {
  if (train.empty()) throw DataError("no training vectors");
  if (cfg.epochs < 0) throw DataError("epochs must be non-negative");
  check_width(train);

  const Eigen::Index n = static_cast<Eigen::Index>(train.size());
  Eigen::MatrixXd x(n, kFlatWidth);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = train[static_cast<std::size_t>(i)];
    if (r.label != 0 && r.label != 1)
      throw DataError("labels must be 0 or 1");
    x.row(i) = r.values.transpose();
    y(i) = static_cast<double>(r.label);
  }

  LogregModel model;
  model.w = Eigen::VectorXd::Zero(kFlatWidth);
  model.b = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Eigen::VectorXd z = x * model.w;
    z.array() += model.b;
    Eigen::VectorXd p = z.unaryExpr([](double v) { return sigmoid(v); });
    Eigen::VectorXd err = p - y;
    model.w -= cfg.lr * inv_n * (x.transpose() * err);
    model.b -= cfg.lr * inv_n * err.sum();
  }
  return model;
}

double logreg_score(const LogregModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.w.size())
    throw CompatError("flat vector width does not match the model");
  return sigmoid(model.w.dot(x) + model.b);
}

KnnResult knn_predict(std::span<const FlatVector> train,
                      const Eigen::VectorXd& query, int k) {
  if (train.empty()) throw DataError("no training vectors");
  if (k < 1) throw DataError("k must be positive");
  for (const auto& r : train)
    if (r.values.size() != query.size())
      throw CompatError("flat vector width does not match the query");

  const std::size_t n = train.size();
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i)
    dist[i] = {(train[i].values - query).norm(), i};
  std::sort(dist.begin(), dist.end());

  const std::size_t keep = std::min<std::size_t>(n, static_cast<std::size_t>(k));
  int positives = 0;
  for (std::size_t i = 0; i < keep; ++i)
    positives += train[dist[i].second].label == 1 ? 1 : 0;

  KnnResult out;
  out.score = static_cast<double>(positives) / static_cast<double>(keep);
  if (out.score > 0.5)
    out.label = 1;
  else if (out.score < 0.5)
    out.label = 0;
  else
    out.label = train[dist[0].second].label;
  return out;
}

FlatMlpModel train_flat_mlp(std::span<const FlatVector> train,
                            const FlatMlpConfig& cfg) {
  if (train.empty()) throw DataError("no training vectors");
  if (cfg.classes < 2) throw DataError("classes must be at least 2");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0))
    throw DataError("dropout must lie in [0, 1)");
  if (cfg.train.epochs < 0) throw DataError("epochs must be non-negative");
  if (cfg.train.batch_size < 1) throw DataError("batch_size must be positive");
  check_width(train);
  for (const auto& r : train)
    if (r.label < 0 || r.label >= cfg.classes)
      throw DataError("label out of range");

  Rng rng_init(derive_seed(cfg.train.seed, SeedStream::init));
  Rng rng_drop(derive_seed(cfg.train.seed, SeedStream::dropout));
  Rng rng_order(derive_seed(cfg.train.seed, SeedStream::batch_order));

  FlatMlpModel model;
  model.input_width = kFlatWidth;
  model.hidden = cfg.hidden;
  model.classes = cfg.classes;
  model.mlp = dgcnn::init_mlp(kFlatWidth, cfg.hidden, cfg.classes, rng_init);

  Eigen::VectorXd theta = dgcnn::flatten_mlp(model.mlp);
  dgcnn::AdamState adam(cfg.train.adam);
  const bool use_dropout = cfg.dropout > 0.0 && !cfg.hidden.empty();
  const std::size_t n = train.size();

  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng_order.shuffle(order);

    model.mlp = dgcnn::unflatten_mlp(kFlatWidth, cfg.hidden, cfg.classes, theta);
    for (std::size_t start = 0; start < n;
         start += static_cast<std::size_t>(cfg.train.batch_size)) {
      const std::size_t stop =
          std::min(n, start + static_cast<std::size_t>(cfg.train.batch_size));
      const int batch = static_cast<int>(stop - start);

      Eigen::MatrixXd input(batch, kFlatWidth);
      std::vector<int> labels(static_cast<std::size_t>(batch));
      for (int i = 0; i < batch; ++i) {
        const auto& r = train[order[start + static_cast<std::size_t>(i)]];
        input.row(i) = r.values.transpose();
        labels[static_cast<std::size_t>(i)] = r.label;
      }

      std::vector<Eigen::MatrixXd> masks;
      if (use_dropout)
        masks = dgcnn::sample_dropout_masks_batch(cfg.hidden, cfg.dropout,
                                                  batch, rng_drop);
      dgcnn::MlpBatchTrace tr = dgcnn::mlp_forward_batch(
          std::move(input), model.mlp, use_dropout ? &masks : nullptr);
      dgcnn::MlpBatchGrads grads =
          dgcnn::mlp_backward_batch(tr, labels, model.mlp);
      dgcnn::adam_step(theta, dgcnn::flatten_mlp(grads.grads), adam);
      model.mlp =
          dgcnn::unflatten_mlp(kFlatWidth, cfg.hidden, cfg.classes, theta);
    }
  }

  model.mlp = dgcnn::unflatten_mlp(kFlatWidth, cfg.hidden, cfg.classes, theta);
  return model;
}

double flat_mlp_score(const FlatMlpModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.input_width)
    throw CompatError("flat vector width does not match the model");
  Eigen::VectorXd probs = dgcnn::mlp_forward(x.transpose(), model.mlp, nullptr);
  return probs(1);
}

}  // namespace mfg::baselines
