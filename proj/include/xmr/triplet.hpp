#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "xmr/embedstore.hpp"
#include "xmr/errors.hpp"
#include "xmr/knn.hpp"

namespace xmr {

enum class TowerMode { kTrain, kEval };

inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kBatchNormEps = 1e-5;

/// One projection tower: linear -> batch norm -> ReLU -> dropout -> linear.
/// Trainable tensors are in `Scalar`; running statistics are always 64-bit.
template <typename Scalar>
struct TowerParams {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix w1;  ///< hidden x input
  Vector b1;
  Vector bn_gamma;
  Vector bn_beta;
  Eigen::VectorXd bn_running_mean;
  Eigen::VectorXd bn_running_var;
  Matrix w2;  ///< output x hidden
  Vector b2;

  int input_dim() const { return static_cast<int>(w1.cols()); }
  int hidden_dim() const { return static_cast<int>(w1.rows()); }
  int output_dim() const { return static_cast<int>(w2.rows()); }

  /// Weights and biases uniform in +-1/sqrt(fan_in); gamma = 1, beta = 0,
  /// running mean 0 and running variance 1.
  template <typename Rng>
  static TowerParams init(int input, int hidden, int output, Rng& rng) {
    TowerParams p;
    auto uniform = [&rng](Eigen::Index rows, Eigen::Index cols, double fan_in) {
      const double bound = 1.0 / std::sqrt(fan_in);
      std::uniform_real_distribution<double> u(-bound, bound);
      Matrix m(rows, cols);
      for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = static_cast<Scalar>(u(rng));
      return m;
    };
    p.w1 = uniform(hidden, input, input);
    p.b1 = uniform(hidden, 1, input);
    p.bn_gamma = Vector::Ones(hidden);
    p.bn_beta = Vector::Zero(hidden);
    p.bn_running_mean = Eigen::VectorXd::Zero(hidden);
    p.bn_running_var = Eigen::VectorXd::Ones(hidden);
    p.w2 = uniform(output, hidden, hidden);
    p.b2 = uniform(output, 1, hidden);
    return p;
  }

  /// Same shapes, trainable tensors zeroed; used for gradients and Adam moments.
  TowerParams zeros_like() const {
    TowerParams z;
    z.w1 = Matrix::Zero(w1.rows(), w1.cols());
    z.b1 = Vector::Zero(b1.size());
    z.bn_gamma = Vector::Zero(bn_gamma.size());
    z.bn_beta = Vector::Zero(bn_beta.size());
    z.bn_running_mean = bn_running_mean;
    z.bn_running_var = bn_running_var;
    z.w2 = Matrix::Zero(w2.rows(), w2.cols());
    z.b2 = Vector::Zero(b2.size());
    return z;
  }

  /// Visits every trainable tensor as a flat span, in a fixed order.
  template <typename Fn>
  void for_each_trainable(Fn&& fn) {
    fn(std::span<Scalar>(w1.data(), static_cast<std::size_t>(w1.size())));
    fn(std::span<Scalar>(b1.data(), static_cast<std::size_t>(b1.size())));
    fn(std::span<Scalar>(bn_gamma.data(), static_cast<std::size_t>(bn_gamma.size())));
    fn(std::span<Scalar>(bn_beta.data(), static_cast<std::size_t>(bn_beta.size())));
    fn(std::span<Scalar>(w2.data(), static_cast<std::size_t>(w2.size())));
    fn(std::span<Scalar>(b2.data(), static_cast<std::size_t>(b2.size())));
  }

  bool all_finite() const {
    return w1.allFinite() && b1.allFinite() && bn_gamma.allFinite() && bn_beta.allFinite() && w2.allFinite() &&
           b2.allFinite() && bn_running_mean.allFinite() && bn_running_var.allFinite() &&
           (bn_running_var.array() >= 0.0).all();
  }

  template <typename Other>
  TowerParams<Other> cast() const {
    TowerParams<Other> o;
    o.w1 = w1.template cast<Other>();
    o.b1 = b1.template cast<Other>();
    o.bn_gamma = bn_gamma.template cast<Other>();
    o.bn_beta = bn_beta.template cast<Other>();
    o.bn_running_mean = bn_running_mean;
    o.bn_running_var = bn_running_var;
    o.w2 = w2.template cast<Other>();
    o.b2 = b2.template cast<Other>();
    return o;
  }
};

/// Intermediate activations kept by a train-mode forward pass for backprop.
template <typename Scalar>
struct TowerCache {
  using Matrix = typename TowerParams<Scalar>::Matrix;
  using Vector = typename TowerParams<Scalar>::Vector;

  Matrix input;       ///< batch x input
  Matrix normalized;  ///< x-hat, batch x hidden
  Matrix pre_relu;    ///< gamma * x-hat + beta
  Matrix keep_scale;  ///< dropout mask already divided by (1 - rate); empty without dropout
  Matrix hidden;      ///< activations entering the output layer
  Vector inv_std;
  Eigen::VectorXd batch_mean;
  Eigen::VectorXd batch_var;  ///< biased
};

/// Forward pass over a batch whose rows are samples.
///
/// Train mode normalizes with batch statistics (needs >= 2 rows) and applies
/// inverted dropout drawn from `noise`; eval mode uses running statistics,
/// skips dropout and ignores `noise`.
template <typename Scalar, typename Rng = std::mt19937_64>
typename TowerParams<Scalar>::Matrix tower_forward(const TowerParams<Scalar>& p,
                                                   const typename TowerParams<Scalar>::Matrix& x, TowerMode mode,
                                                   double dropout_rate = 0.0, Rng* noise = nullptr,
                                                   TowerCache<Scalar>* cache = nullptr) {
  using Matrix = typename TowerParams<Scalar>::Matrix;
  using Vector = typename TowerParams<Scalar>::Vector;
  if (x.cols() != p.w1.cols()) {
    fail(ErrorCode::kDimensionMismatch,
         "tower input dim " + std::to_string(p.w1.cols()) + ", got " + std::to_string(x.cols()));
  }
  const Eigen::Index batch = x.rows();
  Matrix z = x * p.w1.transpose();
  z.rowwise() += p.b1.transpose();

  Vector mean;
  Vector inv_std;
  Eigen::VectorXd batch_var;
  if (mode == TowerMode::kTrain) {
    if (batch < 2) fail(ErrorCode::kBatchTooSmall, "batch statistics need at least 2 rows");
    mean = z.colwise().mean().transpose();
    Matrix centered = z.rowwise() - mean.transpose();
    Vector var = centered.array().square().colwise().mean().transpose();
    batch_var = var.template cast<double>();
    inv_std = (var.array() + Scalar(kBatchNormEps)).sqrt().inverse().matrix();
  } else {
    mean = p.bn_running_mean.template cast<Scalar>();
    inv_std = (p.bn_running_var.array() + kBatchNormEps).sqrt().inverse().matrix().template cast<Scalar>();
  }
  Matrix normalized = (z.rowwise() - mean.transpose()) * inv_std.asDiagonal();
  Matrix pre_relu = normalized * p.bn_gamma.asDiagonal();
  pre_relu.rowwise() += p.bn_beta.transpose();
  Matrix hidden = pre_relu.cwiseMax(Scalar(0));

  Matrix keep_scale;
  if (mode == TowerMode::kTrain && dropout_rate > 0.0) {
    if (!noise) fail(ErrorCode::kInvalidConfig, "train-mode dropout needs a noise source");
    std::bernoulli_distribution keep(1.0 - dropout_rate);
    const Scalar scale = Scalar(1.0 / (1.0 - dropout_rate));
    keep_scale.resize(batch, hidden.cols());
    for (Eigen::Index r = 0; r < batch; ++r)
      for (Eigen::Index c = 0; c < hidden.cols(); ++c) keep_scale(r, c) = keep(*noise) ? scale : Scalar(0);
    hidden = hidden.cwiseProduct(keep_scale);
  }

  Matrix out = hidden * p.w2.transpose();
  out.rowwise() += p.b2.transpose();

  if (cache) {
    cache->input = x;
    cache->normalized = std::move(normalized);
    cache->pre_relu = std::move(pre_relu);
    cache->keep_scale = std::move(keep_scale);
    cache->hidden = std::move(hidden);
    cache->inv_std = std::move(inv_std);
    cache->batch_mean = mean.template cast<double>();
    cache->batch_var = std::move(batch_var);
  }
  return out;
}

/// Gradients of the trainable tensors given dLoss/dOutput for a cached
/// train-mode forward pass. Running statistics in the result are untouched.
template <typename Scalar>
TowerParams<Scalar> tower_backward(const TowerParams<Scalar>& p, const TowerCache<Scalar>& cache,
                                   const typename TowerParams<Scalar>::Matrix& grad_out) {
  using Matrix = typename TowerParams<Scalar>::Matrix;
  using Vector = typename TowerParams<Scalar>::Vector;
  const Scalar batch = static_cast<Scalar>(grad_out.rows());
  TowerParams<Scalar> g = p.zeros_like();

  g.w2 = grad_out.transpose() * cache.hidden;
  g.b2 = grad_out.colwise().sum().transpose();
  Matrix grad_hidden = grad_out * p.w2;
  if (cache.keep_scale.size() > 0) grad_hidden = grad_hidden.cwiseProduct(cache.keep_scale);
  Matrix grad_pre = (cache.pre_relu.array() > Scalar(0)).select(grad_hidden, Scalar(0));

  g.bn_gamma = grad_pre.cwiseProduct(cache.normalized).colwise().sum().transpose();
  g.bn_beta = grad_pre.colwise().sum().transpose();
  const Matrix grad_norm = grad_pre * p.bn_gamma.asDiagonal();
  const Vector sum_grad = grad_norm.colwise().sum().transpose();
  const Vector sum_grad_x = grad_norm.cwiseProduct(cache.normalized).colwise().sum().transpose();
  Matrix grad_z = (grad_norm * batch).rowwise() - sum_grad.transpose();
  grad_z -= cache.normalized * sum_grad_x.asDiagonal();
  grad_z = grad_z * (cache.inv_std / batch).asDiagonal();

  g.w1 = grad_z.transpose() * cache.input;
  g.b1 = grad_z.colwise().sum().transpose();
  return g;
}

/// Exponential moving average of the batch statistics (unbiased variance).
template <typename Scalar>
void update_running_stats(TowerParams<Scalar>& p, const TowerCache<Scalar>& cache, std::size_t batch_rows) {
  const double n = static_cast<double>(batch_rows);
  const Eigen::VectorXd unbiased = cache.batch_var * (n / (n - 1.0));
  p.bn_running_mean = (1.0 - kBatchNormMomentum) * p.bn_running_mean + kBatchNormMomentum * cache.batch_mean;
  p.bn_running_var = (1.0 - kBatchNormMomentum) * p.bn_running_var + kBatchNormMomentum * unbiased;
}

/// Hinge triplet loss max(0, d(a, p) - d(a, n) + margin) on cosine distance.
template <typename A, typename P, typename N>
double triplet_loss(const Eigen::MatrixBase<A>& anchor, const Eigen::MatrixBase<P>& positive,
                    const Eigen::MatrixBase<N>& negative, double margin) {
  return std::max(0.0, cosine_distance(anchor, positive) - cosine_distance(anchor, negative) + margin);
}

/// Row of `batch` closest to `anchor` (cosine) among rows whose group differs
/// from the positive's group; lowest row wins ties. Throws
/// Error(kNoValidNegative) when every row shares the positive's group.
template <typename A, typename M>
std::size_t mine_hard_negative(const Eigen::MatrixBase<A>& anchor, const Eigen::MatrixBase<M>& batch,
                               std::size_t positive_index, std::span<const std::size_t> groups) {
  if (batch.rows() < 2) fail(ErrorCode::kBatchTooSmall, "mining needs at least 2 rows");
  if (groups.size() != static_cast<std::size_t>(batch.rows())) {
    fail(ErrorCode::kDimensionMismatch, "one group id per batch row is required");
  }
  const std::size_t positive_group = groups[positive_index];
  const double anchor_sq = squared_norm64(anchor);
  std::size_t best = static_cast<std::size_t>(-1);
  double best_distance = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < groups.size(); ++r) {
    if (groups[r] == positive_group) continue;
    const auto row = batch.row(static_cast<Eigen::Index>(r));
    const double d = cosine_from_dot(dot64(row, anchor), squared_norm64(row), anchor_sq);
    if (d < best_distance) {
      best_distance = d;
      best = r;
    }
  }
  if (best == static_cast<std::size_t>(-1)) {
    fail(ErrorCode::kNoValidNegative, "all batch rows belong to the positive's group");
  }
  return best;
}

namespace detail {

/// d(cosine distance)/du for d = 1 - u.v / (|u||v|).
template <typename Vec>
Vec cosine_distance_grad(const Vec& u, const Vec& v) {
  const double nu = std::sqrt(squared_norm64(u));
  const double nv = std::sqrt(squared_norm64(v));
  const double cos = dot64(u, v) / (nu * nv);
  using S = typename Vec::Scalar;
  return (u * S(cos / (nu * nu)) - v * S(1.0 / (nu * nv))).eval();
}

}  // namespace detail

/// Mean triplet loss over a batch with in-batch hard negatives and its
/// gradients with respect to both projected batches. Anchors without any
/// valid negative are skipped and do not count towards the mean.
template <typename Scalar>
struct TripletBatchLoss {
  using Matrix = typename TowerParams<Scalar>::Matrix;
  double loss = 0.0;
  std::size_t triplets = 0;
  std::vector<std::size_t> negatives;  ///< mined row per anchor; SIZE_MAX if skipped
  Matrix grad_anchor;
  Matrix grad_other;
};

template <typename Scalar>
TripletBatchLoss<Scalar> triplet_batch_loss(const typename TowerParams<Scalar>::Matrix& anchors,
                                            const typename TowerParams<Scalar>::Matrix& others,
                                            std::span<const std::size_t> groups, double margin) {
  using Matrix = typename TowerParams<Scalar>::Matrix;
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  const Eigen::Index batch = anchors.rows();
  const RowMatrix anchor_rows = anchors;
  const RowMatrix other_rows = others;
  for (Eigen::Index r = 0; r < batch; ++r) {
    if (!(squared_norm64(anchor_rows.row(r)) > 0.0) || !(squared_norm64(other_rows.row(r)) > 0.0)) {
      fail(ErrorCode::kZeroNorm, "projected embedding collapsed to zero at batch row " + std::to_string(r));
    }
  }
  TripletBatchLoss<Scalar> out;
  out.negatives.assign(static_cast<std::size_t>(batch), static_cast<std::size_t>(-1));
  out.grad_anchor = Matrix::Zero(batch, anchors.cols());
  out.grad_other = Matrix::Zero(batch, others.cols());
  for (Eigen::Index i = 0; i < batch; ++i) {
    const RowVec a = anchor_rows.row(i);
    std::size_t neg = 0;
    try {
      neg = mine_hard_negative(a, other_rows, static_cast<std::size_t>(i), groups);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNoValidNegative) throw;
      continue;
    }
    out.negatives[static_cast<std::size_t>(i)] = neg;
    ++out.triplets;
    const RowVec p = other_rows.row(i);
    const RowVec n = other_rows.row(static_cast<Eigen::Index>(neg));
    const double value = cosine_distance(a, p) - cosine_distance(a, n) + margin;
    if (value > 0.0) {
      out.loss += value;
      out.grad_anchor.row(i) += detail::cosine_distance_grad(a, p) - detail::cosine_distance_grad(a, n);
      out.grad_other.row(i) += detail::cosine_distance_grad(p, a);
      out.grad_other.row(static_cast<Eigen::Index>(neg)) -= detail::cosine_distance_grad(n, a);
    }
  }
  if (out.triplets > 0) {
    const Scalar scale = Scalar(1.0 / static_cast<double>(out.triplets));
    out.loss /= static_cast<double>(out.triplets);
    out.grad_anchor *= scale;
    out.grad_other *= scale;
  }
  return out;
}

enum class AnchorModality { kImage, kText };

struct TripletConfig {
  double margin = 0.3;
  int output_dim = 1024;
  int hidden_dim = 1024;
  double dropout_rate = 0.3;
  std::size_t batch_size = 256;
  double learning_rate = 0.002;
  int epochs = 30;
  std::uint64_t seed = 0;
  /// Alternate the updated tower per epoch: even epochs image, odd epochs text.
  bool alternating = true;
  AnchorModality anchor = AnchorModality::kImage;

  void validate() const;
};

/// Loss and gradients for both towers on one batch of paired rows.
template <typename Scalar>
struct TripletGradients {
  double loss = 0.0;
  std::size_t triplets = 0;
  TowerParams<Scalar> image;
  TowerParams<Scalar> text;
  TowerCache<Scalar> image_cache;
  TowerCache<Scalar> text_cache;
};

/// Forward both towers in train mode, mine negatives among the other
/// modality's rows, and backpropagate the batch-mean loss into the towers
/// whose gradients are requested.
/// `groups[r]` is the text identity of row r.
template <typename Scalar, typename Rng = std::mt19937_64>
TripletGradients<Scalar> triplet_gradients(const TowerParams<Scalar>& image_tower,
                                           const TowerParams<Scalar>& text_tower,
                                           const typename TowerParams<Scalar>::Matrix& images,
                                           const typename TowerParams<Scalar>::Matrix& texts,
                                           std::span<const std::size_t> groups, double margin, AnchorModality anchor,
                                           double dropout_rate = 0.0, Rng* noise = nullptr,
                                           bool image_grads = true, bool text_grads = true) {
  TripletGradients<Scalar> g;
  const auto image_proj = tower_forward(image_tower, images, TowerMode::kTrain, dropout_rate, noise, &g.image_cache);
  const auto text_proj = tower_forward(text_tower, texts, TowerMode::kTrain, dropout_rate, noise, &g.text_cache);
  const bool image_anchor = anchor == AnchorModality::kImage;
  auto batch = image_anchor ? triplet_batch_loss<Scalar>(image_proj, text_proj, groups, margin)
                            : triplet_batch_loss<Scalar>(text_proj, image_proj, groups, margin);
  g.loss = batch.loss;
  g.triplets = batch.triplets;
  if (image_grads) {
    g.image = tower_backward(image_tower, g.image_cache, image_anchor ? batch.grad_anchor : batch.grad_other);
  }
  if (text_grads) {
    g.text = tower_backward(text_tower, g.text_cache, image_anchor ? batch.grad_other : batch.grad_anchor);
  }
  return g;
}

/// Trained alignment head: image tower, text tower and their settings.
struct TripletModel {
  TowerParams<double> image_tower;
  TowerParams<double> text_tower;
  TripletConfig config;
  int trained_epochs = 0;
};

struct TripletTrainResult {
  TripletModel model;
  std::vector<double> epoch_loss;  ///< mean batch loss per epoch
};

/// Seeded initial model for the corpus dimensions (what zero epochs returns).
TripletModel init_triplet_model(int image_dim, int text_dim, const TripletConfig& config);

/// Mini-batch Adam training (beta1 0.9, beta2 0.999, eps 1e-8) over
/// seeded-shuffled (image, paired text) rows. Incomplete trailing batches are
/// dropped. Deterministic for a fixed corpus, config and seed.
TripletTrainResult train_triplet(const PairedCorpus& corpus, const TripletConfig& config,
                                 const std::function<void(int, double)>& on_epoch = {});

/// Eval-mode projection of every row into the shared space; ids preserved.
/// Rows are projected independently, so the result is order-equivariant.
EmbeddingSet project(const TripletModel& model, const EmbeddingSet& set, Modality modality, unsigned threads = 0);

/// TPL1 checkpoint: config block then both towers as float32 tensors.
void save_checkpoint(const TripletModel& model, const std::filesystem::path& path);
TripletModel load_checkpoint(const std::filesystem::path& path);

}  // namespace xmr
