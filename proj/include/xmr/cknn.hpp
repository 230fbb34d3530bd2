#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "xmr/embedstore.hpp"
#include "xmr/knn.hpp"

namespace xmr {

/// Cross-modal kNN settings. Defaults are the values reported to work across
/// all encoders: alpha = 0.1, 15 text neighbours, 3 image neighbours.
struct CkNNConfig {
  double alpha = 0.1;
  std::size_t k_t = 15;
  std::size_t k_i = 3;
  /// Search text neighbours only among texts that have at least one image.
  bool restrict_to_paired = true;

  void validate() const;
};

/// Non-parametric cross-modal model: the training corpus plus its settings.
/// Nothing is fitted; representations are built on demand from neighbours.
class CkNNModel {
 public:
  CkNNModel(PairedCorpus train, CkNNConfig config);

  const PairedCorpus& train() const { return train_; }
  const CkNNConfig& config() const { return config_; }

  /// Texts searched for text neighbours (all texts, or only paired ones).
  const EmbeddingSet& searchable_texts() const { return searchable_texts_; }
  /// Row in train().texts() for a row of searchable_texts().
  std::size_t searchable_to_train(std::size_t row) const { return searchable_to_train_[row]; }

 private:
  PairedCorpus train_;
  CkNNConfig config_;
  EmbeddingSet searchable_texts_;
  std::vector<std::size_t> searchable_to_train_;
};

/// A text represented in image space: the mean image embedding over all
/// images paired with the k_t nearest training texts. Contributions are
/// summed in ascending image-row order.
Eigen::VectorXd cknn_image_repr(const CkNNModel& model, const Eigen::Ref<const Eigen::VectorXd>& text_embedding,
                                const IdSet& exclude = {});

/// An image represented in text space: the mean of the paired text of each of
/// the k_i nearest training images. A text reached through two neighbour
/// images is counted twice.
Eigen::VectorXd cknn_text_repr(const CkNNModel& model, const Eigen::Ref<const Eigen::VectorXd>& image_embedding,
                               const IdSet& exclude = {});

/// alpha * d_i + (1 - alpha) * d_t.
/// Batch forms of the two representations, one row per input row. Row q
/// equals the single-query result for row q exactly.
RowMatrixXd cknn_image_reprs(const CkNNModel& model, const RowMatrixXf& texts, unsigned threads = 0);
RowMatrixXd cknn_text_reprs(const CkNNModel& model, const RowMatrixXf& images, unsigned threads = 0);

inline double combine_distances(double alpha, double image_term, double text_term) {
  return image_term * alpha + text_term * (1.0 - alpha);
}

/// Combined image/text distance: alpha * d(image, CkNN_i(text)) + (1 - alpha) * d(CkNN_t(image), text).
double cknn_distance(const CkNNModel& model, const Eigen::Ref<const Eigen::VectorXd>& image_embedding,
                     const Eigen::Ref<const Eigen::VectorXd>& text_embedding);

/// The two terms of cknn_distance, kept apart for diagnostics and endpoint checks.
struct CkNNTerms {
  double image_space = 0.0;
  double text_space = 0.0;
};

/// Scores every candidate of the other modality against `query` and sorts
/// ascending by (distance, candidate row). The query's own representation is
/// computed once; each candidate's representation once per candidate.
NeighborList cknn_rank(const CkNNModel& model, const Eigen::Ref<const Eigen::VectorXd>& query, Modality query_modality,
                       const EmbeddingSet& candidates, unsigned threads = 1, std::vector<CkNNTerms>* terms = nullptr);

}  // namespace xmr
