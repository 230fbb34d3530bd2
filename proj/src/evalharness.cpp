#include "xmr/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <iterator>
#include <numeric>
#include <random>
#include <shared_mutex>
#include <unordered_map>
#include <unordered_set>

#include "xmr/parallel.hpp"
#include "xmr/random.hpp"

namespace xmr {

void EvalProtocol::validate() const {
  if (pool_size < 1) fail(ErrorCode::kInvalidConfig, "pool size must be >= 1");
  if (repeats < 1) fail(ErrorCode::kInvalidConfig, "repeats must be >= 1");
  if (mode == EvalMode::kMWay && m < 1) fail(ErrorCode::kInvalidConfig, "m must be >= 1");
  if (recall_ranks.empty()) fail(ErrorCode::kInvalidConfig, "need at least one recall rank");
  for (const int k : recall_ranks) {
    if (k < 1) fail(ErrorCode::kInvalidConfig, "recall ranks must be >= 1");
  }
}

namespace {

Eigen::VectorXd row_vector(const EmbeddingSet& set, std::size_t row) { return set.row(row).transpose().cast<double>(); }

class CosineScorer final : public PoolScorer {
 public:
  explicit CosineScorer(const EmbeddingSet& candidates) : candidates_(&candidates) {}

  std::vector<double> rank_candidates(const EmbeddingSet& queries, std::size_t row) const override {
    if (queries.dim() != candidates_->dim()) {
      fail(ErrorCode::kDimensionMismatch, "query dim " + std::to_string(queries.dim()) + " vs candidate dim " +
                                              std::to_string(candidates_->dim()));
    }
    const std::size_t n = candidates_->size();
    const Eigen::VectorXd q = row_vector(queries, row);
    const double qn = queries.squared_norm(row);
    std::vector<double> d(n);
    detail::dot_rows(q.data(), candidates_->matrix().data(), n, candidates_->dim(), d.data());
    for (std::size_t c = 0; c < n; ++c) d[c] = cosine_from_dot(d[c], candidates_->squared_norm(c), qn);
    return d;
  }

 private:
  const EmbeddingSet* candidates_;
};

class CkNNScorer final : public PoolScorer {
 public:
  CkNNScorer(const CkNNRanker& ranker, const CkNNModel& model, const EmbeddingSet& candidates,
             Modality candidate_modality)
      : ranker_(&ranker),
        model_(&model),
        candidate_modality_(candidate_modality),
        candidates_(candidates.matrix()),
        candidate_sq_(candidates.squared_norms().begin(), candidates.squared_norms().end()),
        reprs_(ranker.representations(candidates, candidate_modality)),
        repr_sq_(row_squared_norms(reprs_)) {
    for (const double sq : candidate_sq_) {
      if (!(sq > 0.0)) fail(ErrorCode::kZeroNorm, "zero candidate embedding");
    }
  }

  void prepare(const EmbeddingSet& queries) override {
    query_reprs_ = ranker_->representations(queries, other(candidate_modality_));
    query_repr_sq_ = row_squared_norms(query_reprs_);
    prepared_ = &queries;
  }

  std::vector<double> rank_candidates(const EmbeddingSet& queries, std::size_t row) const override {
    const Eigen::VectorXd q = row_vector(queries, row);
    const double q_sq = queries.squared_norm(row);
    if (!(q_sq > 0.0)) fail(ErrorCode::kZeroNorm, "zero query embedding");
    Eigen::VectorXd repr;
    double repr_sq = 0.0;
    if (prepared_ == &queries) {
      repr = query_reprs_.row(static_cast<Eigen::Index>(row)).transpose();
      repr_sq = query_repr_sq_[row];
    } else {
      repr = candidate_modality_ == Modality::kText ? cknn_text_repr(*model_, q) : cknn_image_repr(*model_, q);
      repr_sq = check_norm(squared_norm64(repr));
    }
    const double alpha = model_->config().alpha;
    const std::size_t n = candidate_sq_.size();
    if (static_cast<Eigen::Index>(q.size()) != reprs_.cols() || repr.size() != candidates_.cols()) {
      fail(ErrorCode::kDimensionMismatch, "query embedding does not match the training corpus");
    }
    std::vector<double> with_reprs(n), with_candidates(n);
    detail::dot_rows(q.data(), reprs_.data(), n, reprs_.cols(), with_reprs.data());
    detail::dot_rows(repr.data(), candidates_.data(), n, candidates_.cols(), with_candidates.data());
    std::vector<double> d(n);
    for (std::size_t c = 0; c < n; ++c) {
      // the image-space term compares images, the text-space term texts
      const double query_vs_repr = cosine_from_dot(with_reprs[c], q_sq, repr_sq_[c]);
      const double repr_vs_cand = cosine_from_dot(with_candidates[c], repr_sq, candidate_sq_[c]);
      d[c] = candidate_modality_ == Modality::kText ? combine_distances(alpha, query_vs_repr, repr_vs_cand)
                                                    : combine_distances(alpha, repr_vs_cand, query_vs_repr);
    }
    return d;
  }

 private:
  static double check_norm(double sq) {
    if (!(sq > 0.0)) fail(ErrorCode::kZeroNorm, "cross-modal representation collapsed to zero");
    return sq;
  }

  static std::vector<double> row_squared_norms(const RowMatrixXd& m) {
    std::vector<double> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) out[static_cast<std::size_t>(r)] = check_norm(squared_norm64(m.row(r)));
    return out;
  }

  const CkNNRanker* ranker_;
  const CkNNModel* model_;
  Modality candidate_modality_;
  RowMatrixXf candidates_;
  std::vector<double> candidate_sq_;
  RowMatrixXd reprs_;
  std::vector<double> repr_sq_;
  const EmbeddingSet* prepared_ = nullptr;
  RowMatrixXd query_reprs_;
  std::vector<double> query_repr_sq_;
};

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class RandomScorer final : public PoolScorer {
 public:
  RandomScorer(const EmbeddingSet& candidates, std::uint64_t seed) : seed_(seed) {
    hashes_.reserve(candidates.size());
    for (const auto& id : candidates.ids()) hashes_.push_back(fnv1a(id));
  }

  std::vector<double> rank_candidates(const EmbeddingSet& queries, std::size_t row) const override {
    const std::uint64_t q = derive_seed(seed_, fnv1a(queries.id(row)));
    std::vector<double> d(hashes_.size());
    for (std::size_t c = 0; c < d.size(); ++c) d[c] = double(derive_seed(q, hashes_[c]) >> 11) * 0x1.0p-53;
    return d;
  }

 private:
  std::uint64_t seed_;
  std::vector<std::uint64_t> hashes_;
};

/// Owns the per-repeat candidate and query subsets alongside the scorer.
struct BoundPool {
  EmbeddingSet candidates;
  EmbeddingSet queries;
  std::unique_ptr<PoolScorer> scorer;
};

void check_overlap(const Ranker& ranker, const PairedCorpus& corpus, OverlapPolicy policy) {
  const auto training = ranker.training_ids();
  if (training.empty()) return;
  const std::unordered_set<std::string> seen(training.begin(), training.end());
  std::size_t shared = 0;
  std::string example;
  for (const auto* set : {&corpus.images(), &corpus.texts()}) {
    for (const auto& id : set->ids()) {
      if (seen.contains(id)) {
        if (shared++ == 0) example = id;
      }
    }
  }
  if (shared == 0) return;
  const std::string msg = std::to_string(shared) + " evaluation ids also appear in the training data (e.g. " + example + ")";
  if (policy == OverlapPolicy::kError) fail(ErrorCode::kTrainTestOverlap, msg);
  std::cerr << "warning: " << msg << '\n';
}

std::vector<std::size_t> images_for(const PairedCorpus& corpus, std::size_t text, bool first_only) {
  const auto& all = corpus.images_of(text);
  if (first_only) return {all.front()};
  return all;
}

Metrics mean_of(const std::vector<RepeatMetrics>& repeats) {
  Metrics m;
  m.recall.assign(repeats.front().metrics.recall.size(), 0.0);
  for (const auto& r : repeats) {
    m.median_rank += r.metrics.median_rank;
    for (std::size_t k = 0; k < m.recall.size(); ++k) m.recall[k] += r.metrics.recall[k];
  }
  const double n = static_cast<double>(repeats.size());
  m.median_rank /= n;
  for (auto& v : m.recall) v /= n;
  return m;
}

Metrics stddev_of(const std::vector<RepeatMetrics>& repeats, const Metrics& mean) {
  Metrics s;
  s.recall.assign(mean.recall.size(), 0.0);
  if (repeats.size() < 2) return s;
  for (const auto& r : repeats) {
    s.median_rank += (r.metrics.median_rank - mean.median_rank) * (r.metrics.median_rank - mean.median_rank);
    for (std::size_t k = 0; k < s.recall.size(); ++k) {
      const double dv = r.metrics.recall[k] - mean.recall[k];
      s.recall[k] += dv * dv;
    }
  }
  const double n1 = static_cast<double>(repeats.size() - 1);
  s.median_rank = std::sqrt(s.median_rank / n1);
  for (auto& v : s.recall) v = std::sqrt(v / n1);
  return s;
}

MetricsReport finish(const EvalProtocol& protocol, std::vector<RepeatMetrics> repeats) {
  MetricsReport report;
  report.protocol = protocol;
  report.mean = mean_of(repeats);
  report.stddev = stddev_of(repeats, report.mean);
  report.repeats = std::move(repeats);
  return report;
}

std::vector<std::size_t> sample_texts(const PairedCorpus& corpus, std::size_t n, std::uint64_t seed) {
  const auto& eligible = corpus.paired_texts();
  if (n > eligible.size()) {
    fail(ErrorCode::kPoolTooLarge, "pool size " + std::to_string(n) + " exceeds the " + std::to_string(eligible.size()) +
                                       " paired texts available");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> picked;
  picked.reserve(n);
  std::sample(eligible.begin(), eligible.end(), std::back_inserter(picked), n, rng);
  return picked;
}

}  // namespace

std::unique_ptr<PoolScorer> CosineRanker::bind(const EmbeddingSet& candidates, Modality) const {
  return std::make_unique<CosineScorer>(candidates);
}

struct CkNNRanker::Cache {
  struct Entry {
    Eigen::VectorXf embedding;
    Eigen::VectorXd repr;
  };
  std::shared_mutex mutex;
  std::unordered_map<std::string, Entry> of_texts;   ///< image-space representations
  std::unordered_map<std::string, Entry> of_images;  ///< text-space representations
};

CkNNRanker::CkNNRanker(const CkNNModel& model, unsigned threads)
    : model_(&model), threads_(threads), cache_(std::make_unique<Cache>()) {}

CkNNRanker::~CkNNRanker() = default;

RowMatrixXd CkNNRanker::representations(const EmbeddingSet& set, Modality modality) const {
  auto& table = modality == Modality::kText ? cache_->of_texts : cache_->of_images;
  const int dim = modality == Modality::kText ? model_->train().images().dim() : model_->train().texts().dim();
  RowMatrixXd out(static_cast<Eigen::Index>(set.size()), dim);
  std::vector<std::size_t> missing;
  {
    std::shared_lock lock(cache_->mutex);
    for (std::size_t r = 0; r < set.size(); ++r) {
      const auto it = table.find(set.id(r));
      if (it != table.end() && it->second.embedding == set.row(r).transpose()) {
        out.row(static_cast<Eigen::Index>(r)) = it->second.repr.transpose();
      } else {
        missing.push_back(r);
      }
    }
  }
  if (missing.empty()) return out;
  const EmbeddingSet fresh = set.subset(missing);
  const RowMatrixXd computed = modality == Modality::kText ? cknn_image_reprs(*model_, fresh.matrix(), threads_)
                                                           : cknn_text_reprs(*model_, fresh.matrix(), threads_);
  std::unique_lock lock(cache_->mutex);
  for (std::size_t m = 0; m < missing.size(); ++m) {
    const auto row = static_cast<Eigen::Index>(m);
    out.row(static_cast<Eigen::Index>(missing[m])) = computed.row(row);
    table.insert_or_assign(fresh.id(m), Cache::Entry{fresh.row(m).transpose(), computed.row(row).transpose()});
  }
  return out;
}

std::unique_ptr<PoolScorer> CkNNRanker::bind(const EmbeddingSet& candidates, Modality candidate_modality) const {
  return std::make_unique<CkNNScorer>(*this, *model_, candidates, candidate_modality);
}

std::vector<std::string> CkNNRanker::training_ids() const {
  std::vector<std::string> ids = model_->train().images().ids();
  const auto& texts = model_->train().texts().ids();
  ids.insert(ids.end(), texts.begin(), texts.end());
  return ids;
}

std::unique_ptr<PoolScorer> RandomRanker::bind(const EmbeddingSet& candidates, Modality) const {
  return std::make_unique<RandomScorer>(candidates, seed_);
}

std::size_t rank_of_true(std::span<const double> distances, std::size_t true_index) {
  if (true_index >= distances.size()) fail(ErrorCode::kInvalidConfig, "true index outside the candidate list");
  const double t = distances[true_index];
  std::size_t rank = 1;
  for (std::size_t c = 0; c < distances.size(); ++c) {
    if (distances[c] < t || (distances[c] == t && c < true_index)) ++rank;
  }
  return rank;
}

std::size_t rank_of_best_true(std::span<const double> distances, std::span<const std::size_t> true_indices) {
  if (true_indices.empty()) fail(ErrorCode::kInvalidConfig, "no true candidate");
  std::size_t best = distances.size() + 1;
  for (const auto t : true_indices) best = std::min(best, rank_of_true(distances, t));
  return best;
}

Metrics compute_metrics(std::span<const std::size_t> ranks, std::span<const int> recall_ranks) {
  if (ranks.empty()) fail(ErrorCode::kEmptyResult, "no ranks to summarize");
  std::vector<std::size_t> sorted(ranks.begin(), ranks.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  Metrics m;
  m.median_rank = n % 2 ? double(sorted[n / 2]) : 0.5 * (double(sorted[n / 2 - 1]) + double(sorted[n / 2]));
  for (const int k : recall_ranks) {
    const auto hits = std::upper_bound(sorted.begin(), sorted.end(), static_cast<std::size_t>(k)) - sorted.begin();
    m.recall.push_back(100.0 * double(hits) / double(n));
  }
  return m;
}

MetricsReport run_pool_eval(const Ranker& ranker, const PairedCorpus& corpus, const EvalProtocol& protocol) {
  protocol.validate();
  check_overlap(ranker, corpus, protocol.overlap);
  const bool image_queries = protocol.direction == Direction::kImageToText;

  std::vector<RepeatMetrics> repeats;
  for (int r = 0; r < protocol.repeats; ++r) {
    const auto texts = sample_texts(corpus, protocol.pool_size, protocol.seed + static_cast<std::uint64_t>(r));
    std::vector<std::size_t> images;
    std::vector<std::size_t> image_owner;  // position in `texts` for each image
    for (std::size_t t = 0; t < texts.size(); ++t) {
      for (const auto img : images_for(corpus, texts[t], protocol.one_image_per_text)) {
        images.push_back(img);
        image_owner.push_back(t);
      }
    }

    BoundPool pool;
    std::vector<std::size_t> ranks;
    if (image_queries) {
      pool.candidates = corpus.texts().subset(texts);
      pool.queries = corpus.images().subset(images);
      pool.scorer = ranker.bind(pool.candidates, Modality::kText);
      pool.scorer->prepare(pool.queries);
      ranks.resize(images.size());
      parallel_for(images.size(), protocol.threads, [&](std::size_t q) {
        ranks[q] = rank_of_true(pool.scorer->rank_candidates(pool.queries, q), image_owner[q]);
      });
    } else {
      pool.candidates = corpus.images().subset(images);
      pool.queries = corpus.texts().subset(texts);
      pool.scorer = ranker.bind(pool.candidates, Modality::kImage);
      pool.scorer->prepare(pool.queries);
      std::vector<std::vector<std::size_t>> owned(texts.size());
      for (std::size_t i = 0; i < image_owner.size(); ++i) owned[image_owner[i]].push_back(i);
      ranks.resize(texts.size());
      parallel_for(texts.size(), protocol.threads, [&](std::size_t q) {
        ranks[q] = rank_of_best_true(pool.scorer->rank_candidates(pool.queries, q), owned[q]);
      });
    }
    repeats.push_back({compute_metrics(ranks, protocol.recall_ranks), ranks.size()});
  }
  return finish(protocol, std::move(repeats));
}

MetricsReport run_mway_eval(const Ranker& ranker, const PairedCorpus& corpus, const EvalProtocol& protocol) {
  protocol.validate();
  check_overlap(ranker, corpus, protocol.overlap);
  const bool image_queries = protocol.direction == Direction::kImageToText;
  const auto& eligible = corpus.paired_texts();
  if (protocol.m > eligible.size()) {
    fail(ErrorCode::kPoolTooLarge, "m = " + std::to_string(protocol.m) + " exceeds the " +
                                       std::to_string(eligible.size()) + " paired texts available");
  }

  std::vector<RepeatMetrics> repeats;
  for (int r = 0; r < protocol.repeats; ++r) {
    const std::uint64_t seed = protocol.seed + static_cast<std::uint64_t>(r);
    const auto texts = sample_texts(corpus, protocol.pool_size, seed);

    // One query per (text, image) for image queries, one per text otherwise.
    struct Query {
      std::size_t row;         // row in the query modality
      std::size_t true_text;   // text row of the true match
    };
    std::vector<Query> queries;
    for (const auto t : texts) {
      if (image_queries) {
        for (const auto img : images_for(corpus, t, protocol.one_image_per_text)) queries.push_back({img, t});
      } else {
        queries.push_back({t, t});
      }
    }

    // Candidate texts per query: the true text plus m - 1 distinct distractors,
    // ordered by corpus row. Drawn sequentially so threads do not matter.
    std::mt19937_64 rng(derive_seed(seed, 1));
    std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
    std::vector<std::vector<std::size_t>> candidate_texts(queries.size());
    for (std::size_t q = 0; q < queries.size(); ++q) {
      auto& chosen = candidate_texts[q];
      chosen.push_back(queries[q].true_text);
      while (chosen.size() < protocol.m) {
        const std::size_t t = eligible[pick(rng)];
        if (std::find(chosen.begin(), chosen.end(), t) == chosen.end()) chosen.push_back(t);
      }
      std::sort(chosen.begin(), chosen.end());
    }

    std::vector<std::size_t> ranks(queries.size());
    parallel_for(queries.size(), protocol.threads, [&](std::size_t q) {
      const auto& chosen = candidate_texts[q];
      const std::size_t truth = static_cast<std::size_t>(
          std::find(chosen.begin(), chosen.end(), queries[q].true_text) - chosen.begin());
      const std::size_t query_row[] = {queries[q].row};
      BoundPool pool;
      if (image_queries) {
        pool.candidates = corpus.texts().subset(chosen);
        pool.queries = corpus.images().subset(query_row);
        pool.scorer = ranker.bind(pool.candidates, Modality::kText);
      } else {
        std::vector<std::size_t> rows;
        rows.reserve(chosen.size());
        for (const auto t : chosen) rows.push_back(corpus.images_of(t).front());
        pool.candidates = corpus.images().subset(rows);
        pool.queries = corpus.texts().subset(query_row);
        pool.scorer = ranker.bind(pool.candidates, Modality::kImage);
      }
      pool.scorer->prepare(pool.queries);
      ranks[q] = rank_of_true(pool.scorer->rank_candidates(pool.queries, 0), truth);
    });
    repeats.push_back({compute_metrics(ranks, protocol.recall_ranks), ranks.size()});
  }
  return finish(protocol, std::move(repeats));
}

MetricsReport run_eval(const Ranker& ranker, const PairedCorpus& corpus, const EvalProtocol& protocol) {
  return protocol.mode == EvalMode::kMWay ? run_mway_eval(ranker, corpus, protocol)
                                          : run_pool_eval(ranker, corpus, protocol);
}

namespace {

std::unordered_set<std::string> common_ids(std::span<const NamedSet> sets) {
  std::unordered_set<std::string> common(sets.front().second.ids().begin(), sets.front().second.ids().end());
  for (std::size_t s = 1; s < sets.size(); ++s) {
    std::erase_if(common, [&](const std::string& id) { return !sets[s].second.index_of(id).has_value(); });
  }
  return common;
}

/// Pairs whose ends exist in every encoder, plus the referenced rows of each
/// modality in the first encoder's order.
struct SplitIds {
  std::vector<IdPair> pairs;
  std::vector<std::string> images;
  std::vector<std::string> texts;
};

SplitIds restrict_split(std::span<const IdPair> pairs, const std::unordered_set<std::string>& image_universe,
                        const std::unordered_set<std::string>& text_universe, const EmbeddingSet& image_order,
                        const EmbeddingSet& text_order, const char* split) {
  SplitIds out;
  std::unordered_set<std::string> images, texts;
  for (const auto& p : pairs) {
    if (image_universe.contains(p.first) && text_universe.contains(p.second)) {
      out.pairs.push_back(p);
      images.insert(p.first);
      texts.insert(p.second);
    }
  }
  if (out.pairs.empty()) {
    fail(ErrorCode::kEmptyIntersection, std::string("no ") + split + " pair has both ends in every encoder");
  }
  for (const auto& id : image_order.ids()) {
    if (images.contains(id)) out.images.push_back(id);
  }
  for (const auto& id : text_order.ids()) {
    if (texts.contains(id)) out.texts.push_back(id);
  }
  return out;
}

EmbeddingSet pick(const EmbeddingSet& set, const std::vector<std::string>& ids) {
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (const auto& id : ids) rows.push_back(set.require_index(id));
  return set.subset(rows);
}

}  // namespace

GridReport grid_compare(std::span<const NamedSet> image_sets, std::span<const NamedSet> text_sets,
                        std::span<const IdPair> train_pairs, std::span<const IdPair> test_pairs,
                        const EvalProtocol& protocol, const CkNNConfig& cknn_config) {
  if (image_sets.empty() || text_sets.empty()) fail(ErrorCode::kInvalidConfig, "grid needs at least one encoder per modality");
  const auto image_universe = common_ids(image_sets);
  const auto text_universe = common_ids(text_sets);
  const auto train = restrict_split(train_pairs, image_universe, text_universe, image_sets.front().second,
                                    text_sets.front().second, "training");
  const auto test = restrict_split(test_pairs, image_universe, text_universe, image_sets.front().second,
                                   text_sets.front().second, "test");

  GridReport report;
  for (const auto& [name, set] : image_sets) report.image_encoders.push_back(name);
  for (const auto& [name, set] : text_sets) report.text_encoders.push_back(name);
  for (const auto& [image_name, images] : image_sets) {
    for (const auto& [text_name, texts] : text_sets) {
      const CkNNModel model(join_corpus(pick(images, train.images), pick(texts, train.texts), train.pairs), cknn_config);
      const auto test_corpus = join_corpus(pick(images, test.images), pick(texts, test.texts), test.pairs);
      report.cells.push_back(run_eval(CkNNRanker(model, protocol.threads), test_corpus, protocol));
    }
  }
  return report;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::vector<std::string> header(const EvalProtocol& protocol) {
  std::vector<std::string> h{"medR"};
  for (const int k : protocol.recall_ranks) h.push_back("R@" + std::to_string(k));
  return h;
}

std::vector<std::string> values(const Metrics& m) {
  std::vector<std::string> v{fmt(m.median_rank)};
  for (const double r : m.recall) v.push_back(fmt(r));
  return v;
}

using Rows = std::vector<std::vector<std::string>>;

Rows report_rows(const MetricsReport& report) {
  Rows rows;
  for (std::size_t r = 0; r < report.repeats.size(); ++r) {
    auto row = values(report.repeats[r].metrics);
    row.insert(row.begin(), std::to_string(r));
    rows.push_back(std::move(row));
  }
  auto mean = values(report.mean);
  mean.insert(mean.begin(), "mean");
  rows.push_back(std::move(mean));
  auto sd = values(report.stddev);
  sd.insert(sd.begin(), "std");
  rows.push_back(std::move(sd));
  return rows;
}

void emit_tsv(const Rows& rows, std::ostream& out) {
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "\t" : "") << row[c];
    out << '\n';
  }
}

void emit_table(const Rows& rows, std::ostream& out) {
  std::vector<std::size_t> width;
  for (const auto& row : rows) {
    width.resize(std::max(width.size(), row.size()), 0);
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) line += "  ";
      const std::string pad(width[c] - row[c].size(), ' ');
      line += c == 0 ? row[c] + pad : pad + row[c];
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
  }
}

Rows with_header(const EvalProtocol& protocol, std::vector<std::string> lead, Rows body) {
  auto h = header(protocol);
  h.insert(h.begin(), lead.begin(), lead.end());
  body.insert(body.begin(), std::move(h));
  return body;
}

Rows grid_rows(const GridReport& report) {
  Rows body;
  for (std::size_t i = 0; i < report.image_encoders.size(); ++i) {
    for (std::size_t t = 0; t < report.text_encoders.size(); ++t) {
      for (auto row : report_rows(report.at(i, t))) {
        row.insert(row.begin(), {report.image_encoders[i], report.text_encoders[t]});
        body.push_back(std::move(row));
      }
    }
  }
  return with_header(report.cells.front().protocol, {"image_encoder", "text_encoder", "repeat"}, std::move(body));
}

}  // namespace

void write_report_tsv(const MetricsReport& report, std::ostream& out) {
  emit_tsv(with_header(report.protocol, {"repeat"}, report_rows(report)), out);
}

void write_report_table(const MetricsReport& report, std::ostream& out) {
  emit_table(with_header(report.protocol, {"repeat"}, report_rows(report)), out);
}

void write_grid_tsv(const GridReport& report, std::ostream& out) { emit_tsv(grid_rows(report), out); }

void write_grid_table(const GridReport& report, std::ostream& out) { emit_table(grid_rows(report), out); }

}  // namespace xmr
