#include "mfg/dgcnn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "mfg/errors.hpp"
#include "mfg/metrics.hpp"
#include "mfg/textio.hpp"

namespace mfg::dgcnn {

namespace {

Eigen::MatrixXd apply_act(Eigen::MatrixXd m, Activation act) {
  if (act == Activation::tanh) m = m.array().tanh().matrix();
  return m;
}

Eigen::RowVectorXd apply_act(Eigen::RowVectorXd v, Activation act) {
  if (act == Activation::tanh) v = v.array().tanh().matrix();
  return v;
}

// d(act(s))/ds expressed through the activation output a.
Eigen::MatrixXd act_grad_from_out(const Eigen::MatrixXd& upstream,
                                  const Eigen::MatrixXd& a, Activation act) {
  if (act == Activation::identity) return upstream;
  return (upstream.array() * (1.0 - a.array().square())).matrix();
}

void fill_glorot(Eigen::MatrixXd& m, double fan_in, double fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      m(i, j) = rng.uniform(-limit, limit);
}

std::vector<int> full_sort_order(const Eigen::MatrixXd& z) {
  std::vector<int> idx(static_cast<std::size_t>(z.rows()));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    for (Eigen::Index c = z.cols() - 1; c >= 0; --c) {
      if (z(a, c) != z(b, c)) return z(a, c) > z(b, c);
    }
    return a < b;
  });
  return idx;
}

Eigen::VectorXd softmax_row(const Eigen::RowVectorXd& logits) {
  Eigen::RowVectorXd e =
      (logits.array() - logits.maxCoeff()).exp().matrix();
  return (e / e.sum()).transpose();
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i)
    out.row(i) = softmax_row(logits.row(i)).transpose();
  return out;
}

ModelParams zero_like(const ModelParams& p) {
  ModelParams z;
  z.conv_w.reserve(p.conv_w.size());
  for (const auto& w : p.conv_w)
    z.conv_w.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  z.agg_w = Eigen::RowVectorXd::Zero(p.agg_w.cols());
  for (const auto& w : p.mlp.w)
    z.mlp.w.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  for (const auto& b : p.mlp.b)
    z.mlp.b.push_back(Eigen::VectorXd::Zero(b.size()));
  return z;
}

// Backprop from the gradient at the graph embedding down to the convolution
// weights; adds into acc.
void graph_backward(const GraphTrace& gt, const ModelParams& params,
                    const DgcnnConfig& cfg, const Eigen::RowVectorXd& d_e,
                    ModelParams& acc, Eigen::MatrixXd* dz_cat_out) {
  Eigen::RowVectorXd du = d_e;
  if (cfg.agg_act == Activation::tanh)
    du = (d_e.array() * (1.0 - gt.e_g.array().square())).matrix();

  acc.agg_w += du * gt.z_sp.transpose();
  Eigen::MatrixXd d_zsp = params.agg_w.transpose() * du;

  const Eigen::Index n = gt.z.front().rows();
  const Eigen::Index f = cfg.concat_width();
  Eigen::MatrixXd d_zcat = Eigen::MatrixXd::Zero(n, f);
  for (std::size_t j = 0; j < gt.order.size(); ++j)
    d_zcat.row(gt.order[j]) = d_zsp.row(static_cast<Eigen::Index>(j));
  if (dz_cat_out) *dz_cat_out = d_zcat;

  const int depth = static_cast<int>(params.conv_w.size());
  std::vector<Eigen::Index> offset(static_cast<std::size_t>(depth));
  Eigen::Index off = 0;
  for (int t = 0; t < depth; ++t) {
    offset[static_cast<std::size_t>(t)] = off;
    off += cfg.conv_channels[static_cast<std::size_t>(t)];
  }

  Eigen::MatrixXd carry;
  for (int t = depth - 1; t >= 0; --t) {
    const Eigen::Index ch = cfg.conv_channels[static_cast<std::size_t>(t)];
    Eigen::MatrixXd g = d_zcat.middleCols(offset[static_cast<std::size_t>(t)], ch);
    if (carry.size() > 0) g += carry;
    Eigen::MatrixXd ds =
        act_grad_from_out(g, gt.z[static_cast<std::size_t>(t) + 1], cfg.conv_act);
    acc.conv_w[static_cast<std::size_t>(t)] +=
        gt.pz[static_cast<std::size_t>(t)].transpose() * ds;
    if (t > 0)
      carry = gt.p.transpose() *
              (ds * params.conv_w[static_cast<std::size_t>(t)].transpose());
  }
}

void put_bytes(std::vector<std::uint8_t>& buf, const void* p, std::size_t n) {
  const auto* b = static_cast<const std::uint8_t*>(p);
  buf.insert(buf.end(), b, b + n);
}

void put_u8(std::vector<std::uint8_t>& buf, std::uint8_t v) { buf.push_back(v); }

void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& buf, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put_u64(buf, bits);
}

struct ByteReader {
  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw CompatError("checkpoint truncated");
  }
  std::uint8_t u8() {
    need(1);
    return buf[pos++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos++]) << (8 * i);
    return v;
  }
  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
};

constexpr char kCkptMagic[8] = {'M', 'F', 'G', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kCkptVersion = 1;

Activation act_from_id(std::uint8_t id) {
  if (id == 0) return Activation::identity;
  if (id == 1) return Activation::tanh;
  throw CompatError("checkpoint uses an unknown activation id");
}

}  // namespace

int DgcnnConfig::concat_width() const {
  int f = 0;
  for (int c : conv_channels) f += c;
  return f;
}

void DgcnnConfig::validate() const {
  if (input_width < 1) throw DataError("input_width must be positive");
  if (conv_channels.empty())
    throw DataError("at least one convolution layer is required");
  for (int c : conv_channels)
    if (c < 1) throw DataError("convolution channel counts must be positive");
  if (!(pooling_rate > 0.0 && pooling_rate <= 1.0))
    throw DataError("pooling_rate must lie in (0, 1]");
  if (k < 0) throw DataError("k must be 0 (derive) or positive");
  for (int h : mlp_hidden)
    if (h < 1) throw DataError("mlp hidden widths must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw DataError("dropout must lie in [0, 1)");
  if (classes < 2) throw DataError("classes must be at least 2");
}

ModelParams init_params(const DgcnnConfig& cfg, int k, Rng& rng) {
  cfg.validate();
  if (k < 1) throw DataError("k must be positive to initialize parameters");
  ModelParams p;
  int in = cfg.input_width;
  for (int out : cfg.conv_channels) {
    Eigen::MatrixXd w(in, out);
    fill_glorot(w, in, out, rng);
    p.conv_w.push_back(std::move(w));
    in = out;
  }
  Eigen::MatrixXd agg(1, k);
  fill_glorot(agg, k, 1, rng);
  p.agg_w = agg.row(0);
  p.mlp = init_mlp(cfg.concat_width(), cfg.mlp_hidden, cfg.classes, rng);
  return p;
}

MlpParams init_mlp(int input_width, std::span<const int> hidden, int classes,
                   Rng& rng) {
  MlpParams p;
  int in = input_width;
  std::vector<int> outs(hidden.begin(), hidden.end());
  outs.push_back(classes);
  for (int out : outs) {
    Eigen::MatrixXd w(in, out);
    fill_glorot(w, in, out, rng);
    p.w.push_back(std::move(w));
    p.b.push_back(Eigen::VectorXd::Zero(out));
    in = out;
  }
  return p;
}

std::int64_t mlp_param_count(int input_width, std::span<const int> hidden,
                             int classes) {
  std::int64_t total = 0;
  std::int64_t in = input_width;
  std::vector<int> outs(hidden.begin(), hidden.end());
  outs.push_back(classes);
  for (int out : outs) {
    total += in * out + out;
    in = out;
  }
  return total;
}

std::int64_t param_count(const DgcnnConfig& cfg, int k) {
  std::int64_t total = 0;
  std::int64_t in = cfg.input_width;
  for (int out : cfg.conv_channels) {
    total += in * out;
    in = out;
  }
  total += k;
  total += mlp_param_count(cfg.concat_width(), cfg.mlp_hidden, cfg.classes);
  return total;
}

Eigen::VectorXd flatten(const ModelParams& p) {
  std::int64_t total = 0;
  for (const auto& w : p.conv_w) total += w.size();
  total += p.agg_w.size();
  for (const auto& w : p.mlp.w) total += w.size();
  for (const auto& b : p.mlp.b) total += b.size();

  Eigen::VectorXd flat(total);
  Eigen::Index pos = 0;
  auto copy_in = [&](const double* src, Eigen::Index n) {
    std::memcpy(flat.data() + pos, src, static_cast<std::size_t>(n) * sizeof(double));
    pos += n;
  };
  for (const auto& w : p.conv_w) copy_in(w.data(), w.size());
  copy_in(p.agg_w.data(), p.agg_w.size());
  for (std::size_t i = 0; i < p.mlp.w.size(); ++i) {
    copy_in(p.mlp.w[i].data(), p.mlp.w[i].size());
    copy_in(p.mlp.b[i].data(), p.mlp.b[i].size());
  }
  return flat;
}

ModelParams unflatten(const DgcnnConfig& cfg, int k, const Eigen::VectorXd& v) {
  cfg.validate();
  if (k < 1) throw DataError("k must be positive");
  if (v.size() != param_count(cfg, k))
    throw CompatError("parameter vector has the wrong length");

  ModelParams p;
  Eigen::Index pos = 0;
  auto take = [&](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m =
        Eigen::Map<const Eigen::MatrixXd>(v.data() + pos, rows, cols);
    pos += rows * cols;
    return m;
  };
  Eigen::Index in = cfg.input_width;
  for (int out : cfg.conv_channels) {
    p.conv_w.push_back(take(in, out));
    in = out;
  }
  p.agg_w = take(1, k).row(0);
  in = cfg.concat_width();
  std::vector<int> outs = cfg.mlp_hidden;
  outs.push_back(cfg.classes);
  for (int out : outs) {
    p.mlp.w.push_back(take(in, out));
    p.mlp.b.push_back(take(out, 1).col(0));
    in = out;
  }
  return p;
}

Eigen::VectorXd flatten_mlp(const MlpParams& p) {
  std::int64_t total = 0;
  for (const auto& w : p.w) total += w.size();
  for (const auto& b : p.b) total += b.size();
  Eigen::VectorXd flat(total);
  Eigen::Index pos = 0;
  for (std::size_t i = 0; i < p.w.size(); ++i) {
    std::memcpy(flat.data() + pos, p.w[i].data(),
                static_cast<std::size_t>(p.w[i].size()) * sizeof(double));
    pos += p.w[i].size();
    std::memcpy(flat.data() + pos, p.b[i].data(),
                static_cast<std::size_t>(p.b[i].size()) * sizeof(double));
    pos += p.b[i].size();
  }
  return flat;
}

MlpParams unflatten_mlp(int input_width, std::span<const int> hidden,
                        int classes, const Eigen::VectorXd& v) {
  if (v.size() != mlp_param_count(input_width, hidden, classes))
    throw CompatError("parameter vector has the wrong length");
  MlpParams p;
  Eigen::Index pos = 0;
  Eigen::Index in = input_width;
  std::vector<int> outs(hidden.begin(), hidden.end());
  outs.push_back(classes);
  for (int out : outs) {
    p.w.push_back(Eigen::Map<const Eigen::MatrixXd>(v.data() + pos, in, out));
    pos += in * out;
    p.b.push_back(Eigen::Map<const Eigen::VectorXd>(v.data() + pos, out));
    pos += out;
    in = out;
  }
  return p;
}

Eigen::MatrixXd normalized_adjacency(
    int n, std::span<const std::pair<int, int>> edges) {
  if (n < 1) throw DataError("graph must have at least one node");
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (const auto& [u, v] : edges) {
    if (u < 0 || v < 0 || u >= n || v >= n)
      throw DataError("edge endpoint out of range");
    if (u == v) continue;
    a(u, v) = 1.0;
    a(v, u) = 1.0;
  }
  for (int i = 0; i < n; ++i) a(i, i) = 1.0;
  for (int i = 0; i < n; ++i) a.row(i) /= a.row(i).sum();
  return a;
}

Eigen::MatrixXd propagate(const Eigen::MatrixXd& x,
                          std::span<const std::pair<int, int>> edges,
                          const Eigen::MatrixXd& w, Activation act) {
  if (x.cols() != w.rows())
    throw DataError("attribute width does not match the weight matrix");
  Eigen::MatrixXd p =
      normalized_adjacency(static_cast<int>(x.rows()), edges);
  return apply_act(Eigen::MatrixXd(p * x * w), act);
}

Eigen::MatrixXd forward_conv_stack(const Eigen::MatrixXd& x,
                                   std::span<const std::pair<int, int>> edges,
                                   const ModelParams& params,
                                   const DgcnnConfig& cfg) {
  cfg.validate();
  if (x.cols() != cfg.input_width)
    throw CompatError("graph attribute width does not match the model");
  Eigen::MatrixXd p =
      normalized_adjacency(static_cast<int>(x.rows()), edges);
  Eigen::MatrixXd z_cat(x.rows(), cfg.concat_width());
  Eigen::MatrixXd z = x;
  Eigen::Index off = 0;
  for (std::size_t t = 0; t < params.conv_w.size(); ++t) {
    z = apply_act(Eigen::MatrixXd(p * z * params.conv_w[t]), cfg.conv_act);
    z_cat.middleCols(off, z.cols()) = z;
    off += z.cols();
  }
  return z_cat;
}

std::vector<int> sort_pool_order(const Eigen::MatrixXd& z_cat, int k) {
  if (k < 1) throw DataError("k must be positive");
  std::vector<int> idx = full_sort_order(z_cat);
  const std::size_t keep =
      std::min<std::size_t>(idx.size(), static_cast<std::size_t>(k));
  idx.resize(keep);
  return idx;
}

Eigen::MatrixXd sort_pool(const Eigen::MatrixXd& z_cat, int k) {
  std::vector<int> order = sort_pool_order(z_cat, k);
  Eigen::MatrixXd z_sp = Eigen::MatrixXd::Zero(k, z_cat.cols());
  for (std::size_t j = 0; j < order.size(); ++j)
    z_sp.row(static_cast<Eigen::Index>(j)) = z_cat.row(order[j]);
  return z_sp;
}

Eigen::RowVectorXd aggregate(const Eigen::MatrixXd& z_sp,
                             const Eigen::RowVectorXd& w, Activation act) {
  if (w.cols() != z_sp.rows())
    throw DataError("aggregation weight length does not match k");
  return apply_act(Eigen::RowVectorXd(w * z_sp), act);
}

DropoutMasks sample_dropout_masks(const DgcnnConfig& cfg, Rng& rng) {
  DropoutMasks m;
  for (int h : cfg.mlp_hidden) {
    Eigen::RowVectorXd layer(h);
    const double keep_scale = 1.0 / (1.0 - cfg.dropout);
    for (int i = 0; i < h; ++i)
      layer(i) = rng.bernoulli(cfg.dropout) ? 0.0 : keep_scale;
    m.layers.push_back(std::move(layer));
  }
  return m;
}

std::vector<Eigen::MatrixXd> sample_dropout_masks_batch(
    std::span<const int> hidden, double dropout, int batch, Rng& rng) {
  std::vector<Eigen::MatrixXd> masks;
  masks.reserve(hidden.size());
  for (int h : hidden) masks.emplace_back(batch, h);
  const double keep_scale = 1.0 / (1.0 - dropout);
  for (int row = 0; row < batch; ++row) {
    for (std::size_t l = 0; l < hidden.size(); ++l) {
      for (int i = 0; i < hidden[l]; ++i)
        masks[l](row, i) = rng.bernoulli(dropout) ? 0.0 : keep_scale;
    }
  }
  return masks;
}

Eigen::VectorXd mlp_forward(const Eigen::RowVectorXd& e, const MlpParams& mlp,
                            const DropoutMasks* masks) {
  const std::size_t layers = mlp.w.size();
  if (layers == 0) throw DataError("mlp has no layers");
  Eigen::RowVectorXd cur = e;
  for (std::size_t t = 0; t + 1 < layers; ++t) {
    Eigen::RowVectorXd a =
        (cur * mlp.w[t] + mlp.b[t].transpose()).array().tanh().matrix();
    if (masks) a = a.cwiseProduct(masks->layers.at(t));
    cur = a;
  }
  Eigen::RowVectorXd logits = cur * mlp.w.back() + mlp.b.back().transpose();
  return softmax_row(logits);
}

double loss(const Eigen::VectorXd& probs, int label) {
  if (label < 0 || label >= probs.size())
    throw DataError("label out of range");
  return -std::log(std::max(probs(label), 1e-12));
}

GraphTrace forward_graph(const graph::FeatureGraph& g,
                         const ModelParams& params, const DgcnnConfig& cfg,
                         int k) {
  if (g.x.cols() != cfg.input_width)
    throw CompatError("graph attribute width does not match the model");
  if (k < 1) throw DataError("k must be positive");

  GraphTrace tr;
  tr.p = normalized_adjacency(g.n(), g.edges);
  tr.z.push_back(g.x);
  for (std::size_t t = 0; t < params.conv_w.size(); ++t) {
    tr.pz.push_back(tr.p * tr.z.back());
    tr.z.push_back(
        apply_act(Eigen::MatrixXd(tr.pz.back() * params.conv_w[t]), cfg.conv_act));
  }

  Eigen::MatrixXd z_cat(g.x.rows(), cfg.concat_width());
  Eigen::Index off = 0;
  for (std::size_t t = 1; t < tr.z.size(); ++t) {
    z_cat.middleCols(off, tr.z[t].cols()) = tr.z[t];
    off += tr.z[t].cols();
  }

  tr.order = sort_pool_order(z_cat, k);
  tr.z_sp = Eigen::MatrixXd::Zero(k, z_cat.cols());
  for (std::size_t j = 0; j < tr.order.size(); ++j)
    tr.z_sp.row(static_cast<Eigen::Index>(j)) = z_cat.row(tr.order[j]);

  if (params.agg_w.cols() != k)
    throw CompatError("aggregation weight length does not match k");
  tr.u = params.agg_w * tr.z_sp;
  tr.e_g = apply_act(tr.u, cfg.agg_act);
  return tr;
}

ForwardTrace forward(const graph::FeatureGraph& g, const ModelParams& params,
                     const DgcnnConfig& cfg, int k, const DropoutMasks* masks) {
  ForwardTrace tr;
  tr.graph = forward_graph(g, params, cfg, k);
  if (masks) {
    if (masks->layers.size() != cfg.mlp_hidden.size())
      throw DataError("dropout masks do not match the mlp layout");
    tr.masks = *masks;
  }

  const std::size_t layers = params.mlp.w.size();
  Eigen::RowVectorXd cur = tr.graph.e_g;
  for (std::size_t t = 0; t + 1 < layers; ++t) {
    tr.mlp_in.push_back(cur);
    Eigen::RowVectorXd a = (cur * params.mlp.w[t] + params.mlp.b[t].transpose())
                               .array()
                               .tanh()
                               .matrix();
    tr.mlp_act.push_back(a);
    if (masks) a = a.cwiseProduct(tr.masks.layers[t]);
    cur = a;
  }
  tr.mlp_in.push_back(cur);
  tr.logits = cur * params.mlp.w.back() + params.mlp.b.back().transpose();
  tr.probs = softmax_row(tr.logits);
  return tr;
}

ModelParams backward(const ForwardTrace& trace, const graph::FeatureGraph& g,
                     int label, const ModelParams& params,
                     const DgcnnConfig& cfg, int k,
                     Eigen::MatrixXd* dz_cat_out) {
  (void)g;
  (void)k;
  if (label < 0 || label >= trace.probs.size())
    throw DataError("label out of range");

  ModelParams acc = zero_like(params);
  const std::size_t layers = params.mlp.w.size();
  const bool has_masks = !trace.masks.layers.empty();

  Eigen::RowVectorXd d = trace.probs.transpose();
  d(label) -= 1.0;

  acc.mlp.w[layers - 1] += trace.mlp_in[layers - 1].transpose() * d;
  acc.mlp.b[layers - 1] += d.transpose();
  Eigen::RowVectorXd dd = d * params.mlp.w[layers - 1].transpose();

  for (std::size_t t = layers - 1; t-- > 0;) {
    Eigen::RowVectorXd da = dd;
    if (has_masks) da = da.cwiseProduct(trace.masks.layers[t]);
    Eigen::RowVectorXd ds =
        (da.array() * (1.0 - trace.mlp_act[t].array().square())).matrix();
    acc.mlp.w[t] += trace.mlp_in[t].transpose() * ds;
    acc.mlp.b[t] += ds.transpose();
    dd = ds * params.mlp.w[t].transpose();
  }

  graph_backward(trace.graph, params, cfg, dd, acc, dz_cat_out);
  return acc;
}

double predict_score(const graph::FeatureGraph& g, const ModelParams& params,
                     const DgcnnConfig& cfg, int k) {
  if (cfg.classes != 2)
    throw CompatError("scoring expects a two-class model");
  ForwardTrace tr = forward(g, params, cfg, k, nullptr);
  return tr.probs(1);
}

MlpBatchTrace mlp_forward_batch(Eigen::MatrixXd input, const MlpParams& mlp,
                                const std::vector<Eigen::MatrixXd>* masks) {
  const std::size_t layers = mlp.w.size();
  if (layers == 0) throw DataError("mlp has no layers");
  if (masks && masks->size() + 1 != layers)
    throw DataError("dropout masks do not match the mlp layout");

  MlpBatchTrace tr;
  tr.input = std::move(input);
  Eigen::MatrixXd cur = tr.input;
  for (std::size_t t = 0; t + 1 < layers; ++t) {
    Eigen::MatrixXd a = ((cur * mlp.w[t]).rowwise() + mlp.b[t].transpose())
                            .array()
                            .tanh()
                            .matrix();
    tr.act.push_back(a);
    if (masks) {
      tr.mask.push_back((*masks)[t]);
      a = a.cwiseProduct((*masks)[t]);
    }
    tr.drop.push_back(a);
    cur = a;
  }
  tr.logits = (cur * mlp.w.back()).rowwise() + mlp.b.back().transpose();
  tr.probs = softmax_rows(tr.logits);
  return tr;
}

double mean_loss(const Eigen::MatrixXd& probs, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != probs.rows())
    throw DataError("labels do not match the batch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= probs.cols())
      throw DataError("label out of range");
    total += -std::log(std::max(probs(i, label), 1e-12));
  }
  return total / static_cast<double>(probs.rows());
}

MlpBatchGrads mlp_backward_batch(const MlpBatchTrace& trace,
                                 std::span<const int> labels,
                                 const MlpParams& mlp) {
  const std::size_t layers = mlp.w.size();
  const Eigen::Index batch = trace.probs.rows();
  if (static_cast<Eigen::Index>(labels.size()) != batch)
    throw DataError("labels do not match the batch");

  MlpBatchGrads out;
  for (const auto& w : mlp.w)
    out.grads.w.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  for (const auto& b : mlp.b)
    out.grads.b.push_back(Eigen::VectorXd::Zero(b.size()));

  Eigen::MatrixXd d = trace.probs;
  for (Eigen::Index i = 0; i < batch; ++i)
    d(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  d /= static_cast<double>(batch);

  const Eigen::MatrixXd& last_in =
      layers >= 2 ? trace.drop.back() : trace.input;
  out.grads.w[layers - 1] += last_in.transpose() * d;
  out.grads.b[layers - 1] += d.colwise().sum().transpose();
  Eigen::MatrixXd dd = d * mlp.w[layers - 1].transpose();

  for (std::size_t t = layers - 1; t-- > 0;) {
    Eigen::MatrixXd da = dd;
    if (!trace.mask.empty()) da = da.cwiseProduct(trace.mask[t]);
    Eigen::MatrixXd ds =
        (da.array() * (1.0 - trace.act[t].array().square())).matrix();
    const Eigen::MatrixXd& in = t == 0 ? trace.input : trace.drop[t - 1];
    out.grads.w[t] += in.transpose() * ds;
    out.grads.b[t] += ds.colwise().sum().transpose();
    dd = ds * mlp.w[t].transpose();
  }
  out.d_input = std::move(dd);
  return out;
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads,
               AdamState& state) {
  if (grads.size() != params.size())
    throw DataError("gradient length does not match the parameters");
  if (state.m.size() == 0) {
    state.m = Eigen::VectorXd::Zero(params.size());
    state.v = Eigen::VectorXd::Zero(params.size());
  }
  if (state.m.size() != params.size())
    throw DataError("optimizer state does not match the parameters");

  state.t += 1;
  const AdamConfig& c = state.cfg;
  state.m = c.beta1 * state.m + (1.0 - c.beta1) * grads;
  state.v =
      (c.beta2 * state.v.array() + (1.0 - c.beta2) * grads.array().square())
          .matrix();
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  params.array() -=
      c.lr * (state.m.array() / bc1) /
      ((state.v.array() / bc2).sqrt() + c.eps);
}

TrainResult train(std::span<const graph::FeatureGraph> train_graphs,
                  std::span<const graph::FeatureGraph> val_graphs,
                  const DgcnnConfig& cfg, const TrainConfig& tc,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_graphs.empty()) throw DataError("no training graphs");
  if (tc.epochs < 0) throw DataError("epochs must be non-negative");
  if (tc.batch_size < 1) throw DataError("batch_size must be positive");
  for (const auto& g : train_graphs) {
    if (g.x.cols() != cfg.input_width)
      throw CompatError("graph attribute width does not match the model");
    if (g.label < 0 || g.label >= cfg.classes)
      throw DataError("graph label out of range");
  }
  for (const auto& g : val_graphs) {
    if (g.x.cols() != cfg.input_width)
      throw CompatError("graph attribute width does not match the model");
    if (g.label < 0 || g.label >= cfg.classes)
      throw DataError("graph label out of range");
  }

  const int k =
      cfg.k > 0 ? cfg.k : graph::select_k(train_graphs, cfg.pooling_rate);

  Rng rng_init(derive_seed(tc.seed, SeedStream::init));
  Rng rng_drop(derive_seed(tc.seed, SeedStream::dropout));
  Rng rng_order(derive_seed(tc.seed, SeedStream::batch_order));

  ModelParams params = init_params(cfg, k, rng_init);
  Eigen::VectorXd theta = flatten(params);
  AdamState adam(tc.adam);

  const bool use_dropout = cfg.dropout > 0.0 && !cfg.mlp_hidden.empty();
  const std::size_t n = train_graphs.size();

  TrainResult result;
  result.k = k;

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng_order.shuffle(order);

    params = unflatten(cfg, k, theta);
    double loss_sum = 0.0;

    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t stop =
          std::min(n, start + static_cast<std::size_t>(tc.batch_size));
      const int batch = static_cast<int>(stop - start);

      std::vector<GraphTrace> traces;
      traces.reserve(static_cast<std::size_t>(batch));
      Eigen::MatrixXd embed(batch, cfg.concat_width());
      std::vector<int> labels(static_cast<std::size_t>(batch));
      for (int i = 0; i < batch; ++i) {
        const auto& g = train_graphs[order[start + static_cast<std::size_t>(i)]];
        traces.push_back(forward_graph(g, params, cfg, k));
        embed.row(i) = traces.back().e_g;
        labels[static_cast<std::size_t>(i)] = g.label;
      }

      std::vector<Eigen::MatrixXd> masks;
      if (use_dropout)
        masks = sample_dropout_masks_batch(cfg.mlp_hidden, cfg.dropout, batch,
                                           rng_drop);
      MlpBatchTrace mt = mlp_forward_batch(std::move(embed), params.mlp,
                                           use_dropout ? &masks : nullptr);
      loss_sum += mean_loss(mt.probs, labels) * batch;

      MlpBatchGrads mg = mlp_backward_batch(mt, labels, params.mlp);
      ModelParams grads = zero_like(params);
      grads.mlp = std::move(mg.grads);
      for (int i = 0; i < batch; ++i)
        graph_backward(traces[static_cast<std::size_t>(i)], params, cfg,
                       mg.d_input.row(i), grads, nullptr);

      adam_step(theta, flatten(grads), adam);
      params = unflatten(cfg, k, theta);
    }

    EpochLog log;
    log.train_loss = loss_sum / static_cast<double>(n);
    if (!val_graphs.empty()) {
      std::vector<int> preds, truths;
      preds.reserve(val_graphs.size());
      truths.reserve(val_graphs.size());
      for (const auto& g : val_graphs) {
        preds.push_back(predict_score(g, params, cfg, k) > 0.5 ? 1 : 0);
        truths.push_back(g.label);
      }
      log.val_f1 = metrics::scalar_metrics(metrics::confusion(preds, truths)).f1;
      log.has_val = true;
    }
    result.epochs.push_back(log);
    if (on_epoch) on_epoch(epoch + 1, log);
  }

  result.params = unflatten(cfg, k, theta);
  return result;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  ckpt.cfg.validate();
  if (ckpt.k < 1) throw DataError("checkpoint k must be positive");

  std::vector<std::uint8_t> buf;
  put_bytes(buf, kCkptMagic, sizeof kCkptMagic);
  put_u32(buf, kCkptVersion);
  put_u32(buf, static_cast<std::uint32_t>(ckpt.cfg.input_width));
  put_u32(buf, static_cast<std::uint32_t>(ckpt.cfg.conv_channels.size()));
  for (int c : ckpt.cfg.conv_channels)
    put_u32(buf, static_cast<std::uint32_t>(c));
  put_u8(buf, static_cast<std::uint8_t>(ckpt.cfg.conv_act));
  put_u8(buf, static_cast<std::uint8_t>(ckpt.cfg.agg_act));
  put_f64(buf, ckpt.cfg.pooling_rate);
  put_u32(buf, static_cast<std::uint32_t>(ckpt.k));
  put_u32(buf, static_cast<std::uint32_t>(ckpt.cfg.mlp_hidden.size()));
  for (int h : ckpt.cfg.mlp_hidden) put_u32(buf, static_cast<std::uint32_t>(h));
  put_f64(buf, ckpt.cfg.dropout);
  put_u32(buf, static_cast<std::uint32_t>(ckpt.cfg.classes));
  put_u64(buf, ckpt.train_echo.seed);
  put_u32(buf, static_cast<std::uint32_t>(ckpt.train_echo.epochs));
  put_u32(buf, static_cast<std::uint32_t>(ckpt.train_echo.batch_size));
  put_f64(buf, ckpt.train_echo.adam.lr);
  put_f64(buf, ckpt.train_echo.adam.beta1);
  put_f64(buf, ckpt.train_echo.adam.beta2);
  put_f64(buf, ckpt.train_echo.adam.eps);

  Eigen::VectorXd flat = flatten(ckpt.params);
  if (flat.size() != param_count(ckpt.cfg, ckpt.k))
    throw DataError("parameters do not match the checkpoint layout");
  put_u64(buf, static_cast<std::uint64_t>(flat.size()));
  for (Eigen::Index i = 0; i < flat.size(); ++i) put_f64(buf, flat(i));

  write_binary_file(path, buf);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::vector<std::uint8_t> buf = read_binary_file(path);
  ByteReader rd{buf};

  rd.need(sizeof kCkptMagic);
  if (std::memcmp(buf.data(), kCkptMagic, sizeof kCkptMagic) != 0)
    throw CompatError(path + ": not a model checkpoint");
  rd.pos = sizeof kCkptMagic;
  if (rd.u32() != kCkptVersion)
    throw CompatError(path + ": unsupported checkpoint version");

  Checkpoint ckpt;
  ckpt.cfg.input_width = static_cast<int>(rd.u32());
  const std::uint32_t n_conv = rd.u32();
  if (n_conv == 0 || n_conv > 64)
    throw CompatError(path + ": implausible convolution depth");
  ckpt.cfg.conv_channels.clear();
  for (std::uint32_t i = 0; i < n_conv; ++i)
    ckpt.cfg.conv_channels.push_back(static_cast<int>(rd.u32()));
  ckpt.cfg.conv_act = act_from_id(rd.u8());
  ckpt.cfg.agg_act = act_from_id(rd.u8());
  ckpt.cfg.pooling_rate = rd.f64();
  ckpt.k = static_cast<int>(rd.u32());
  ckpt.cfg.k = ckpt.k;
  const std::uint32_t n_hidden = rd.u32();
  if (n_hidden > 64) throw CompatError(path + ": implausible mlp depth");
  ckpt.cfg.mlp_hidden.clear();
  for (std::uint32_t i = 0; i < n_hidden; ++i)
    ckpt.cfg.mlp_hidden.push_back(static_cast<int>(rd.u32()));
  ckpt.cfg.dropout = rd.f64();
  ckpt.cfg.classes = static_cast<int>(rd.u32());
  ckpt.train_echo.seed = rd.u64();
  ckpt.train_echo.epochs = static_cast<int>(rd.u32());
  ckpt.train_echo.batch_size = static_cast<int>(rd.u32());
  ckpt.train_echo.adam.lr = rd.f64();
  ckpt.train_echo.adam.beta1 = rd.f64();
  ckpt.train_echo.adam.beta2 = rd.f64();
  ckpt.train_echo.adam.eps = rd.f64();

  try {
    ckpt.cfg.validate();
    if (ckpt.k < 1) throw DataError("k");
  } catch (const DataError&) {
    throw CompatError(path + ": checkpoint header is inconsistent");
  }

  const std::uint64_t n_params = rd.u64();
  if (n_params !=
      static_cast<std::uint64_t>(param_count(ckpt.cfg, ckpt.k)))
    throw CompatError(path + ": parameter count does not match the layout");
  if (buf.size() - rd.pos != n_params * sizeof(double))
    throw CompatError(path + ": parameter payload has the wrong size");

  Eigen::VectorXd flat(static_cast<Eigen::Index>(n_params));
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat(i) = rd.f64();
  ckpt.params = unflatten(ckpt.cfg, ckpt.k, flat);
  return ckpt;
}

}  // namespace mfg::dgcnn
