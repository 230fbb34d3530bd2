#include "xmr/cknn.hpp"

#include <algorithm>
#include <cmath>

#include "xmr/parallel.hpp"

namespace xmr {

void CkNNConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorCode::kInvalidConfig, "alpha must lie in [0, 1]");
  if (k_t < 1) fail(ErrorCode::kInvalidConfig, "k_t must be >= 1");
  if (k_i < 1) fail(ErrorCode::kInvalidConfig, "k_i must be >= 1");
}

CkNNModel::CkNNModel(PairedCorpus train, CkNNConfig config) : train_(std::move(train)), config_(config) {
  config_.validate();
  if (config_.restrict_to_paired) {
    searchable_to_train_ = train_.paired_texts();
    if (searchable_to_train_.empty()) fail(ErrorCode::kEmptySearchSet, "training corpus has no paired texts");
    searchable_texts_ = train_.texts().subset(searchable_to_train_);
  } else {
    searchable_to_train_.resize(train_.texts().size());
    for (std::size_t i = 0; i < searchable_to_train_.size(); ++i) searchable_to_train_[i] = i;
    searchable_texts_ = train_.texts();
  }
}

namespace {

Eigen::VectorXd mean_image_of_texts(const CkNNModel& model, const NeighborList& neighbours) {
  const auto& train = model.train();
  std::vector<std::size_t> images;
  for (const auto& n : neighbours.entries) {
    const auto& imgs = train.images_of(model.searchable_to_train(n.index));
    images.insert(images.end(), imgs.begin(), imgs.end());
  }
  if (images.empty()) fail(ErrorCode::kNoPairedNeighbours, "none of the nearest training texts has an image");
  std::sort(images.begin(), images.end());
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(train.images().dim());
  for (const auto i : images) sum += train.images().row(i).transpose().cast<double>();
  return sum / static_cast<double>(images.size());
}

Eigen::VectorXd mean_text_of_images(const CkNNModel& model, const NeighborList& neighbours) {
  const auto& train = model.train();
  auto images = neighbours.indices();
  std::sort(images.begin(), images.end());
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(train.texts().dim());
  for (const auto i : images) sum += train.texts().row(train.text_of(i)).transpose().cast<double>();
  return sum / static_cast<double>(images.size());
}

void require_training_images(const CkNNModel& model) {
  if (model.train().images().empty()) fail(ErrorCode::kEmptyTrainingImages, "training corpus has no images");
}

}  // namespace

Eigen::VectorXd cknn_image_repr(const CkNNModel& model, const Eigen::Ref<const Eigen::VectorXd>& text_embedding,
                                const IdSet& exclude) {
  return mean_image_of_texts(model, top_k(model.searchable_texts(), text_embedding, model.config().k_t, exclude));
}

Eigen::VectorXd cknn_text_repr(const CkNNModel& model, const Eigen::Ref<const Eigen::VectorXd>& image_embedding,
                               const IdSet& exclude) {
  require_training_images(model);
  return mean_text_of_images(model, top_k(model.train().images(), image_embedding, model.config().k_i, exclude));
}

RowMatrixXd cknn_image_reprs(const CkNNModel& model, const RowMatrixXf& texts, unsigned threads) {
  const auto neighbours = batch_top_k(model.searchable_texts(), texts, model.config().k_t, threads);
  RowMatrixXd out(texts.rows(), model.train().images().dim());
  parallel_for(neighbours.size(), threads, [&](std::size_t q) {
    out.row(static_cast<Eigen::Index>(q)) = mean_image_of_texts(model, neighbours[q]).transpose();
  });
  return out;
}

RowMatrixXd cknn_text_reprs(const CkNNModel& model, const RowMatrixXf& images, unsigned threads) {
  require_training_images(model);
  const auto neighbours = batch_top_k(model.train().images(), images, model.config().k_i, threads);
  RowMatrixXd out(images.rows(), model.train().texts().dim());
  parallel_for(neighbours.size(), threads, [&](std::size_t q) {
    out.row(static_cast<Eigen::Index>(q)) = mean_text_of_images(model, neighbours[q]).transpose();
  });
  return out;
}

double cknn_distance(const CkNNModel& model, const Eigen::Ref<const Eigen::VectorXd>& image_embedding,
                     const Eigen::Ref<const Eigen::VectorXd>& text_embedding) {
  const double image_term = cosine_distance(image_embedding, cknn_image_repr(model, text_embedding));
  const double text_term = cosine_distance(cknn_text_repr(model, image_embedding), text_embedding);
  return combine_distances(model.config().alpha, image_term, text_term);
}

NeighborList cknn_rank(const CkNNModel& model, const Eigen::Ref<const Eigen::VectorXd>& query, Modality query_modality,
                       const EmbeddingSet& candidates, unsigned threads, std::vector<CkNNTerms>* terms) {
  if (candidates.empty()) fail(ErrorCode::kEmptySearchSet, "no candidates to rank");
  const double alpha = model.config().alpha;
  const bool image_query = query_modality == Modality::kImage;
  const Eigen::VectorXd query_repr = image_query ? cknn_text_repr(model, query) : cknn_image_repr(model, query);

  std::vector<Neighbor> scored(candidates.size());
  std::vector<CkNNTerms> local_terms(candidates.size());
  parallel_for(candidates.size(), threads, [&](std::size_t c) {
    const Eigen::VectorXd cand = candidates.row(c).transpose().cast<double>();
    CkNNTerms t;
    if (image_query) {
      t.image_space = cosine_distance(query, cknn_image_repr(model, cand));
      t.text_space = cosine_distance(query_repr, cand);
    } else {
      t.image_space = cosine_distance(cand, query_repr);
      t.text_space = cosine_distance(cknn_text_repr(model, cand), query);
    }
    local_terms[c] = t;
    scored[c] = {c, combine_distances(alpha, t.image_space, t.text_space)};
  });
  std::sort(scored.begin(), scored.end(), closer);
  if (terms) *terms = std::move(local_terms);
  return NeighborList{std::nullopt, std::move(scored)};
}

}  // namespace xmr
