#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "xmr/errors.hpp"

namespace xmr {

/// Row-major float storage; one embedding per row.
using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Modality { kImage, kText };

inline const char* to_string(Modality m) { return m == Modality::kImage ? "image" : "text"; }
inline Modality other(Modality m) { return m == Modality::kImage ? Modality::kText : Modality::kImage; }

enum class EmbeddingFormat { kBinary, kTsv };

/// Picks the format from a file extension: `.tsv`/`.txt` are text, anything else is EMB1.
EmbeddingFormat format_from_path(const std::filesystem::path& path);

/// An immutable, validated, id-indexed matrix of embeddings for one modality.
///
/// Construction checks that ids are unique, every entry is finite and every
/// row has a strictly positive norm; squared norms are cached in 64-bit.
class EmbeddingSet {
 public:
  EmbeddingSet() = default;

  /// Throws Error(kDuplicateId | kNonFinite | kZeroNorm | kDimensionMismatch)
  /// naming the offending row.
  EmbeddingSet(std::vector<std::string> ids, RowMatrixXf matrix);

  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  int dim() const { return static_cast<int>(matrix_.cols()); }

  const std::vector<std::string>& ids() const { return ids_; }
  const std::string& id(std::size_t row) const { return ids_[row]; }
  const RowMatrixXf& matrix() const { return matrix_; }
  auto row(std::size_t i) const { return matrix_.row(static_cast<Eigen::Index>(i)); }
  double norm(std::size_t i) const { return std::sqrt(squared_norms_[i]); }
  double squared_norm(std::size_t i) const { return squared_norms_[i]; }
  std::span<const double> squared_norms() const { return squared_norms_; }

  std::optional<std::size_t> index_of(const std::string& id) const;
  /// Like index_of but throws Error(kUnknownId).
  std::size_t require_index(const std::string& id) const;

  /// Rows in the given order; ids and values are copied.
  EmbeddingSet subset(std::span<const std::size_t> rows) const;

 private:
  std::vector<std::string> ids_;
  RowMatrixXf matrix_;
  std::vector<double> squared_norms_;
  std::unordered_map<std::string, std::size_t> index_;
};

EmbeddingSet load_embeddings(const std::filesystem::path& path, EmbeddingFormat format);
void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path, EmbeddingFormat format);

inline EmbeddingSet load_embeddings(const std::filesystem::path& path) {
  return load_embeddings(path, format_from_path(path));
}
inline void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
  save_embeddings(set, path, format_from_path(path));
}

/// Byte size of an EMB1 file, computed from the format definition.
std::size_t binary_file_size(const std::vector<std::string>& ids, int dim);

using IdPair = std::pair<std::string, std::string>;

/// Correspondence TSV: `image_id<TAB>text_id` per line, `#` comments ignored.
std::vector<IdPair> load_pairs(const std::filesystem::path& path);
void save_pairs(std::span<const IdPair> pairs, const std::filesystem::path& path);

/// Images, texts and the image -> text correspondence. Every image has exactly
/// one text; a text may have any number of images (including none).
class PairedCorpus {
 public:
  PairedCorpus() = default;

  const EmbeddingSet& images() const { return images_; }
  const EmbeddingSet& texts() const { return texts_; }

  /// Text row for an image row.
  std::size_t text_of(std::size_t image_row) const { return image_to_text_[image_row]; }
  /// Image rows for a text row, ascending.
  const std::vector<std::size_t>& images_of(std::size_t text_row) const { return text_to_images_[text_row]; }

  std::span<const std::size_t> image_to_text() const { return image_to_text_; }
  /// Text rows with at least one image, ascending.
  const std::vector<std::size_t>& paired_texts() const { return paired_texts_; }

  std::vector<IdPair> pairs() const;

  friend PairedCorpus join_corpus(EmbeddingSet images, EmbeddingSet texts, std::span<const IdPair> pairs);

 private:
  EmbeddingSet images_;
  EmbeddingSet texts_;
  std::vector<std::size_t> image_to_text_;
  std::vector<std::vector<std::size_t>> text_to_images_;
  std::vector<std::size_t> paired_texts_;
};

/// Throws Error(kUnknownId) for ids missing from either set,
/// Error(kDuplicateImagePairing) when an image is paired twice, and
/// Error(kUnpairedImage) when an image has no pair at all.
PairedCorpus join_corpus(EmbeddingSet images, EmbeddingSet texts, std::span<const IdPair> pairs);

}  // namespace xmr
