#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xmr/cknn.hpp"
#include "xmr/embedstore.hpp"

namespace xmr {

enum class Direction { kImageToText, kTextToImage };
enum class EvalMode { kPoolRanking, kMWay };
enum class OverlapPolicy { kError, kWarn };

inline Modality query_modality(Direction d) { return d == Direction::kImageToText ? Modality::kImage : Modality::kText; }

struct EvalProtocol {
  std::size_t pool_size = 1000;  ///< N sampled texts per repeat
  int repeats = 10;
  Direction direction = Direction::kImageToText;
  std::vector<int> recall_ranks = {1, 5, 10};
  std::uint64_t seed = 0;  ///< repeat r samples with seed + r
  EvalMode mode = EvalMode::kPoolRanking;
  std::size_t m = 5;  ///< candidates per query in m-way mode (1 true + m - 1 distractors)
  /// Keep only the first image of each sampled text.
  bool one_image_per_text = false;
  OverlapPolicy overlap = OverlapPolicy::kError;
  unsigned threads = 0;

  void validate() const;
};

/// A candidate pool bound to a ranker; scores any query against it.
class PoolScorer {
 public:
  virtual ~PoolScorer() = default;
  /// Called with the query set before it is ranked, so per-query work can be
  /// batched. Ranking queries that were never prepared must still work.
  virtual void prepare(const EmbeddingSet& /*queries*/) {}
  /// Distance from `queries` row `row` to every bound candidate, in candidate order.
  virtual std::vector<double> rank_candidates(const EmbeddingSet& queries, std::size_t row) const = 0;
};

/// Anything that can rank candidates of one modality for queries of the other.
class Ranker {
 public:
  virtual ~Ranker() = default;
  virtual std::unique_ptr<PoolScorer> bind(const EmbeddingSet& candidates, Modality candidate_modality) const = 0;
  /// Ids the ranker was built from; checked against the evaluation corpus.
  virtual std::vector<std::string> training_ids() const { return {}; }
};

/// Direct cosine search in a shared space (e.g. after triplet projection).
class CosineRanker final : public Ranker {
 public:
  std::unique_ptr<PoolScorer> bind(const EmbeddingSet& candidates, Modality candidate_modality) const override;
};

/// Ranks with the combined CkNN distance. Cross-modal representations of
/// evaluation items are computed in batches and remembered per item id (and
/// embedding), so repeated pools over one corpus reuse them.
class CkNNRanker final : public Ranker {
 public:
  explicit CkNNRanker(const CkNNModel& model, unsigned threads = 0);
  ~CkNNRanker() override;
  std::unique_ptr<PoolScorer> bind(const EmbeddingSet& candidates, Modality candidate_modality) const override;
  std::vector<std::string> training_ids() const override;

  /// Representations of every row of `set` (texts map to image space,
  /// images to text space), one row each.
  RowMatrixXd representations(const EmbeddingSet& set, Modality modality) const;

 private:
  struct Cache;
  const CkNNModel* model_;
  unsigned threads_;
  std::unique_ptr<Cache> cache_;
};

/// Uniform random distances, reproducible per (seed, query id, candidate id).
class RandomRanker final : public Ranker {
 public:
  explicit RandomRanker(std::uint64_t seed) : seed_(seed) {}
  std::unique_ptr<PoolScorer> bind(const EmbeddingSet& candidates, Modality candidate_modality) const override;

 private:
  std::uint64_t seed_;
};

/// 1 + candidates strictly closer + equally close candidates at a lower index.
std::size_t rank_of_true(std::span<const double> distances, std::size_t true_index);

/// Best rank over several true candidates.
std::size_t rank_of_best_true(std::span<const double> distances, std::span<const std::size_t> true_indices);

struct Metrics {
  double median_rank = 0.0;
  std::vector<double> recall;  ///< percent, aligned with the K list
};

/// medR with the mean-of-middle-two convention; R@K = 100 * |rank <= K| / n.
Metrics compute_metrics(std::span<const std::size_t> ranks, std::span<const int> recall_ranks);

struct RepeatMetrics {
  Metrics metrics;
  std::size_t queries = 0;
};

struct MetricsReport {
  EvalProtocol protocol;
  std::vector<RepeatMetrics> repeats;
  Metrics mean;
  Metrics stddev;  ///< sample standard deviation across repeats
};

/// Pool-ranking protocol: per repeat, sample N paired texts without
/// replacement; every image of a sampled text ranks the N texts
/// (image_to_text), or every sampled text ranks the sampled texts' images and
/// scores its best-ranked image (text_to_image).
MetricsReport run_pool_eval(const Ranker& ranker, const PairedCorpus& corpus, const EvalProtocol& protocol);

/// m-way forced choice: per query, m - 1 distractors of the other modality are
/// drawn uniformly; success iff the true candidate ranks first. Queries are
/// the images (or texts) of N sampled texts per repeat.
MetricsReport run_mway_eval(const Ranker& ranker, const PairedCorpus& corpus, const EvalProtocol& protocol);

/// Dispatches on protocol.mode.
MetricsReport run_eval(const Ranker& ranker, const PairedCorpus& corpus, const EvalProtocol& protocol);

using NamedSet = std::pair<std::string, EmbeddingSet>;

struct GridReport {
  std::vector<std::string> image_encoders;
  std::vector<std::string> text_encoders;
  std::vector<MetricsReport> cells;  ///< row-major: image encoder x text encoder

  const MetricsReport& at(std::size_t image, std::size_t text) const { return cells[image * text_encoders.size() + text]; }
};

/// CkNN over every (image encoder, text encoder) combination. Items missing
/// from any encoder are dropped first, so every cell sees the same ids in
/// the order of the first encoder's file.
GridReport grid_compare(std::span<const NamedSet> image_sets, std::span<const NamedSet> text_sets,
                        std::span<const IdPair> train_pairs, std::span<const IdPair> test_pairs,
                        const EvalProtocol& protocol, const CkNNConfig& cknn_config);

/// Columns `repeat, medR, R@K...` with `mean` and `std` footer rows.
void write_report_tsv(const MetricsReport& report, std::ostream& out);
void write_report_table(const MetricsReport& report, std::ostream& out);
/// Grid reports prefix every row with `image_encoder, text_encoder`.
void write_grid_tsv(const GridReport& report, std::ostream& out);
void write_grid_table(const GridReport& report, std::ostream& out);

}  // namespace xmr
