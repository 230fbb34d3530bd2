#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "xmr/embedstore.hpp"

namespace xmr {

using TokenList = std::vector<std::string>;

/// Lowercases ASCII, splits on anything that is not a letter or digit (bytes
/// >= 0x80 count as letters so UTF-8 words stay whole) and drops tokens
/// shorter than two code points.
TokenList tokenize(std::string_view text);

struct Document {
  std::string id;
  std::string title;
  std::string body;
};

/// `doc_id<TAB>title<TAB>body` per line.
std::vector<Document> load_documents(const std::filesystem::path& path);

enum class OovPolicy { kSkip, kError };

/// Token -> vector table with one shared dimension.
class VocabEmbeddings {
 public:
  VocabEmbeddings() = default;
  VocabEmbeddings(std::vector<std::string> tokens, RowMatrixXf vectors, OovPolicy policy = OovPolicy::kSkip);

  std::size_t size() const { return tokens_.size(); }
  int dim() const { return static_cast<int>(vectors_.cols()); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const RowMatrixXf& vectors() const { return vectors_; }
  OovPolicy oov_policy() const { return policy_; }
  void set_oov_policy(OovPolicy policy) { policy_ = policy; }
  std::optional<std::size_t> index_of(const std::string& token) const;

 private:
  std::vector<std::string> tokens_;
  RowMatrixXf vectors_;
  OovPolicy policy_ = OovPolicy::kSkip;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Text word-vector format: header `count dim`, then `token v1 ... vdim`.
VocabEmbeddings load_word_vectors(const std::filesystem::path& path);
void save_word_vectors(const VocabEmbeddings& vocab, const std::filesystem::path& path);

/// Frequent title unigrams and bigrams used as self-supervised labels.
struct LabelSet {
  std::vector<std::string> labels;      ///< bigrams are "first second"
  std::vector<std::size_t> frequency;   ///< document frequency per label
  std::size_t threshold = 0;

  std::optional<std::size_t> index_of(const std::string& label) const;
};

/// Document frequency of every unigram and adjacent bigram across titles;
/// keeps those with frequency >= threshold, ordered by (frequency desc,
/// label asc). Throws Error(kEmptyResult) when nothing passes.
LabelSet extract_labels(std::span<const TokenList> titles, std::size_t threshold);

/// Indices of the labels that occur in one title, ascending.
std::vector<std::size_t> assign_labels(const TokenList& title, const LabelSet& labels);

/// Unweighted mean of the in-vocabulary token vectors.
Eigen::VectorXd awe_encode(const VocabEmbeddings& vocab, const TokenList& doc);

struct AweTrainConfig {
  int dim = 300;
  int epochs = 15;
  std::size_t batch_size = 128;
  double learning_rate = 0.002;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Embedding table plus the linear-sigmoid classification head.
struct AweParams {
  RowMatrixXd embeddings;  ///< vocab x dim
  Eigen::MatrixXd head_w;  ///< labels x dim
  Eigen::VectorXd head_b;
};

/// Seeded initial parameters: N(0, 1) embeddings, head uniform in +-1/sqrt(dim).
AweParams init_awe_params(std::size_t vocab_size, std::size_t label_count, int dim, std::uint64_t seed);

/// A document as vocabulary rows (repeats kept) and its positive labels.
struct AweExample {
  std::vector<std::size_t> tokens;
  std::vector<std::size_t> labels;
};

struct AweGradients {
  double loss = 0.0;                                ///< mean over docs of the mean per-label BCE
  std::map<std::size_t, Eigen::VectorXd> embedding; ///< only rows touched by the batch
  Eigen::MatrixXd head_w;
  Eigen::VectorXd head_b;
};

/// Multi-label BCE through mean pooling for the given examples.
AweGradients awe_gradients(const AweParams& params, std::span<const AweExample> batch);

struct AweTrainResult {
  VocabEmbeddings vocab;
  std::vector<double> epoch_loss;
};

/// Trains embeddings for the sorted vocabulary of `docs` with Adam; only the
/// table is returned, the head is discarded. Bit-reproducible for a seed.
AweTrainResult train_awe(std::span<const TokenList> docs, std::span<const std::vector<std::size_t>> labels_per_doc,
                         std::size_t label_count, const AweTrainConfig& config);

/// TF-IDF weights over a word vocabulary and an orthonormal projection to a
/// reduced space.
class TfIdfModel {
 public:
  TfIdfModel() = default;
  TfIdfModel(std::vector<std::string> vocabulary, Eigen::VectorXd idf, Eigen::MatrixXd projection);

  bool fitted() const { return fitted_; }
  std::size_t vocabulary_size() const { return vocabulary_.size(); }
  int reduced_dim() const { return static_cast<int>(projection_.cols()); }
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }
  const Eigen::VectorXd& idf() const { return idf_; }
  const Eigen::MatrixXd& projection() const { return projection_; }  ///< vocab x reduced
  std::optional<std::size_t> index_of(const std::string& token) const;

  /// L2-normalized tf-idf vector; OOV tokens ignored. Throws kAllTokensOov.
  Eigen::VectorXd weigh(const TokenList& doc) const;

 private:
  std::vector<std::string> vocabulary_;
  Eigen::VectorXd idf_;
  Eigen::MatrixXd projection_;
  std::unordered_map<std::string, std::size_t> index_;
  bool fitted_ = false;
};

struct TfIdfFit {
  TfIdfModel model;
  Eigen::MatrixXd reduced;  ///< documents x reduced, from the factorization itself
};

struct TfIdfOptions {
  int reduced_dim = 2000;
  int oversample = 10;
  int power_iterations = 4;
  std::uint64_t seed = 0;
};

/// idf = ln((1 + N) / (1 + df)) + 1 on raw counts, rows L2-normalized, then a
/// seeded randomized truncated factorization with power iterations. The
/// reduced dimension is capped at min(documents, vocabulary).
TfIdfFit tfidf_fit(std::span<const TokenList> docs, const TfIdfOptions& options);

Eigen::VectorXd tfidf_encode(const TfIdfModel& model, const TokenList& doc);

void save_tfidf(const TfIdfModel& model, const std::filesystem::path& path);
TfIdfModel load_tfidf(const std::filesystem::path& path);

}  // namespace xmr
