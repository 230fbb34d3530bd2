#include "xmr/textenc.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/SVD>
#include <Eigen/SparseCore>

#include "xmr/detail/binary_io.hpp"
#include "xmr/random.hpp"

namespace xmr {

using detail::read_le;
using detail::write_le;

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

std::size_t code_points(std::string_view s) {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) {
    return (static_cast<unsigned char>(c) & 0xC0) != 0x80;
  }));
}

}  // namespace

TokenList tokenize(std::string_view text) {
  TokenList out;
  std::string current;
  auto flush = [&] {
    if (code_points(current) >= 2) out.push_back(current);
    current.clear();
  };
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_word_byte(c)) {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    } else {
      flush();
    }
  }
  flush();
  return out;
}

std::vector<Document> load_documents(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<Document> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      fail(ErrorCode::kFormat, path.string() + ":" + std::to_string(lineno) + ": expected doc_id<TAB>title<TAB>body");
    }
    docs.push_back({line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1), line.substr(t2 + 1)});
  }
  return docs;
}

VocabEmbeddings::VocabEmbeddings(std::vector<std::string> tokens, RowMatrixXf vectors, OovPolicy policy)
    : tokens_(std::move(tokens)), vectors_(std::move(vectors)), policy_(policy) {
  if (static_cast<Eigen::Index>(tokens_.size()) != vectors_.rows()) {
    fail(ErrorCode::kDimensionMismatch, "token count differs from vector count");
  }
  if (!vectors_.allFinite()) fail(ErrorCode::kNonFinite, "word vectors contain NaN or Inf");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) fail(ErrorCode::kDuplicateId, "token '" + tokens_[i] + "'");
  }
}

std::optional<std::size_t> VocabEmbeddings::index_of(const std::string& token) const {
  const auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

VocabEmbeddings load_word_vectors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::size_t count = 0;
  long dim = 0;
  std::string header;
  if (!std::getline(in, header)) fail(ErrorCode::kFormat, path.string() + ": missing header");
  {
    std::istringstream hs(header);
    if (!(hs >> count >> dim) || dim <= 0) fail(ErrorCode::kFormat, path.string() + ": header must be `count dim`");
  }
  std::vector<std::string> tokens;
  tokens.reserve(count);
  RowMatrixXf vectors(static_cast<Eigen::Index>(count), dim);
  std::string line;
  for (std::size_t row = 0; row < count; ++row) {
    if (!std::getline(in, line)) fail(ErrorCode::kFormat, path.string() + ": expected " + std::to_string(count) + " rows");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string_view rest = line;
    const auto sp = rest.find(' ');
    if (sp == std::string_view::npos) fail(ErrorCode::kFormat, path.string() + ": row " + std::to_string(row));
    tokens.emplace_back(rest.substr(0, sp));
    rest.remove_prefix(sp + 1);
    for (long j = 0; j < dim; ++j) {
      while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
      float v = 0.0f;
      const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), v);
      if (ec != std::errc()) {
        fail(ErrorCode::kDimensionMismatch, path.string() + ": row " + std::to_string(row) + " has too few values");
      }
      vectors(static_cast<Eigen::Index>(row), j) = v;
      rest.remove_prefix(static_cast<std::size_t>(ptr - rest.data()));
    }
    while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
    if (!rest.empty()) {
      fail(ErrorCode::kDimensionMismatch, path.string() + ": row " + std::to_string(row) + " has too many values");
    }
  }
  return VocabEmbeddings(std::move(tokens), std::move(vectors));
}

void save_word_vectors(const VocabEmbeddings& vocab, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out << vocab.size() << ' ' << vocab.dim() << '\n';
  std::array<char, 32> buf{};
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    out << vocab.tokens()[i];
    for (int j = 0; j < vocab.dim(); ++j) {
      const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(),
                                           vocab.vectors()(static_cast<Eigen::Index>(i), j));
      out << ' ' << std::string_view(buf.data(), static_cast<std::size_t>(end - buf.data()));
    }
    out << '\n';
  }
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

std::optional<std::size_t> LabelSet::index_of(const std::string& label) const {
  const auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) return std::nullopt;
  return static_cast<std::size_t>(it - labels.begin());
}

namespace {

std::set<std::string> title_grams(const TokenList& title) {
  std::set<std::string> grams(title.begin(), title.end());
  for (std::size_t i = 0; i + 1 < title.size(); ++i) grams.insert(title[i] + " " + title[i + 1]);
  return grams;
}

}  // namespace

LabelSet extract_labels(std::span<const TokenList> titles, std::size_t threshold) {
  if (titles.empty()) fail(ErrorCode::kEmptyResult, "no titles");
  if (threshold == 0) fail(ErrorCode::kInvalidConfig, "threshold must be >= 1");
  std::unordered_map<std::string, std::size_t> df;
  for (const auto& title : titles) {
    for (const auto& g : title_grams(title)) ++df[g];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [gram, count] : df) {
    if (count >= threshold) kept.emplace_back(gram, count);
  }
  if (kept.empty()) fail(ErrorCode::kEmptyResult, "no label reaches frequency " + std::to_string(threshold));
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  LabelSet out;
  out.threshold = threshold;
  for (auto& [gram, count] : kept) {
    out.labels.push_back(std::move(gram));
    out.frequency.push_back(count);
  }
  return out;
}

std::vector<std::size_t> assign_labels(const TokenList& title, const LabelSet& labels) {
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < labels.labels.size(); ++i) index.emplace(labels.labels[i], i);
  std::vector<std::size_t> out;
  for (const auto& g : title_grams(title)) {
    if (const auto it = index.find(g); it != index.end()) out.push_back(it->second);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Eigen::VectorXd awe_encode(const VocabEmbeddings& vocab, const TokenList& doc) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(vocab.dim());
  std::size_t used = 0;
  for (const auto& token : doc) {
    const auto idx = vocab.index_of(token);
    if (!idx) {
      if (vocab.oov_policy() == OovPolicy::kError) fail(ErrorCode::kAllTokensOov, "out-of-vocabulary token '" + token + "'");
      continue;
    }
    sum += vocab.vectors().row(static_cast<Eigen::Index>(*idx)).transpose().cast<double>();
    ++used;
  }
  if (used == 0) fail(ErrorCode::kAllTokensOov, "no in-vocabulary tokens in document");
  return sum / static_cast<double>(used);
}

void AweTrainConfig::validate() const {
  if (dim < 1) fail(ErrorCode::kInvalidConfig, "dim must be >= 1");
  if (epochs < 0) fail(ErrorCode::kInvalidConfig, "epochs must be >= 0");
  if (batch_size < 1) fail(ErrorCode::kInvalidConfig, "batch_size must be >= 1");
  if (!(learning_rate > 0.0)) fail(ErrorCode::kInvalidConfig, "learning_rate must be > 0");
}

AweParams init_awe_params(std::size_t vocab_size, std::size_t label_count, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 1));
  std::normal_distribution<double> normal(0.0, 1.0);
  AweParams p;
  p.embeddings.resize(static_cast<Eigen::Index>(vocab_size), dim);
  for (Eigen::Index i = 0; i < p.embeddings.size(); ++i) p.embeddings.data()[i] = normal(rng);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  p.head_w.resize(static_cast<Eigen::Index>(label_count), dim);
  for (Eigen::Index c = 0; c < p.head_w.cols(); ++c)
    for (Eigen::Index r = 0; r < p.head_w.rows(); ++r) p.head_w(r, c) = uniform(rng);
  p.head_b.resize(static_cast<Eigen::Index>(label_count));
  for (Eigen::Index r = 0; r < p.head_b.size(); ++r) p.head_b(r) = uniform(rng);
  return p;
}

AweGradients awe_gradients(const AweParams& params, std::span<const AweExample> batch) {
  const auto labels = params.head_w.rows();
  AweGradients g;
  g.head_w = Eigen::MatrixXd::Zero(labels, params.head_w.cols());
  g.head_b = Eigen::VectorXd::Zero(labels);
  if (batch.empty()) return g;
  const double scale = 1.0 / (static_cast<double>(batch.size()) * static_cast<double>(labels));
  for (const auto& ex : batch) {
    if (ex.tokens.empty()) fail(ErrorCode::kInvalidConfig, "empty document in AWE batch");
    Eigen::VectorXd pooled = Eigen::VectorXd::Zero(params.embeddings.cols());
    for (const auto t : ex.tokens) pooled += params.embeddings.row(static_cast<Eigen::Index>(t)).transpose();
    pooled /= static_cast<double>(ex.tokens.size());

    Eigen::VectorXd target = Eigen::VectorXd::Zero(labels);
    for (const auto l : ex.labels) {
      if (static_cast<Eigen::Index>(l) >= labels) fail(ErrorCode::kInvalidConfig, "label index out of range");
      target(static_cast<Eigen::Index>(l)) = 1.0;
    }
    const Eigen::VectorXd logits = params.head_w * pooled + params.head_b;
    Eigen::VectorXd grad_logits(labels);
    for (Eigen::Index c = 0; c < labels; ++c) {
      const double z = logits(c);
      const double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
      g.loss += (softplus - target(c) * z) * scale;
      const double sigmoid = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      grad_logits(c) = (sigmoid - target(c)) * scale;
    }
    g.head_w += grad_logits * pooled.transpose();
    g.head_b += grad_logits;
    const Eigen::VectorXd grad_pooled = params.head_w.transpose() * grad_logits / static_cast<double>(ex.tokens.size());
    for (const auto t : ex.tokens) {
      auto [it, inserted] = g.embedding.try_emplace(t, grad_pooled);
      if (!inserted) it->second += grad_pooled;
    }
  }
  return g;
}

namespace {

struct AdamMoments {
  Eigen::ArrayXd m;
  Eigen::ArrayXd v;
};

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;

template <typename Param, typename Grad>
void adam_update(Param&& param, const Grad& grad, Eigen::Ref<Eigen::ArrayXd> m, Eigen::Ref<Eigen::ArrayXd> v,
                 double lr, double c1, double c2) {
  const Eigen::ArrayXd g = grad.reshaped().array();
  m = kBeta1 * m + (1.0 - kBeta1) * g;
  v = kBeta2 * v + (1.0 - kBeta2) * g.square();
  param.reshaped().array() -= lr * (m / c1) / ((v / c2).sqrt() + kEps);
}

}  // namespace

AweTrainResult train_awe(std::span<const TokenList> docs, std::span<const std::vector<std::size_t>> labels_per_doc,
                         std::size_t label_count, const AweTrainConfig& config) {
  config.validate();
  if (docs.size() != labels_per_doc.size()) fail(ErrorCode::kDimensionMismatch, "one label set per document required");
  if (label_count == 0) fail(ErrorCode::kInvalidConfig, "label_count must be >= 1");

  std::set<std::string> unique;
  for (const auto& d : docs) unique.insert(d.begin(), d.end());
  std::vector<std::string> vocab(unique.begin(), unique.end());
  if (vocab.empty()) fail(ErrorCode::kEmptyVocabulary, "documents contain no tokens");
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < vocab.size(); ++i) index.emplace(vocab[i], i);

  std::vector<AweExample> examples(docs.size());
  for (std::size_t d = 0; d < docs.size(); ++d) {
    if (docs[d].empty()) fail(ErrorCode::kInvalidConfig, "document " + std::to_string(d) + " has no tokens");
    for (const auto& t : docs[d]) examples[d].tokens.push_back(index.at(t));
    examples[d].labels = labels_per_doc[d];
    for (const auto l : examples[d].labels) {
      if (l >= label_count) fail(ErrorCode::kInvalidConfig, "label index out of range in document " + std::to_string(d));
    }
  }

  AweParams params = init_awe_params(vocab.size(), label_count, config.dim, config.seed);
  // Embedding rows are updated lazily: moments and values change only for
  // rows present in the batch.
  Eigen::ArrayXXd emb_m = Eigen::ArrayXXd::Zero(params.embeddings.cols(), params.embeddings.rows());
  Eigen::ArrayXXd emb_v = emb_m;
  AdamMoments head_w{Eigen::ArrayXd::Zero(params.head_w.size()), Eigen::ArrayXd::Zero(params.head_w.size())};
  AdamMoments head_b{Eigen::ArrayXd::Zero(params.head_b.size()), Eigen::ArrayXd::Zero(params.head_b.size())};

  std::mt19937_64 shuffle_rng(derive_seed(config.seed, 2));
  std::vector<std::size_t> order(examples.size());
  std::vector<AweExample> batch;
  AweTrainResult result;
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(examples[order[i]]);
      const auto g = awe_gradients(params, batch);
      if (!std::isfinite(g.loss)) {
        fail(ErrorCode::kNonFiniteLoss, "epoch " + std::to_string(epoch) + " batch " + std::to_string(batches));
      }
      loss_sum += g.loss;
      ++batches;
      ++step;
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      adam_update(params.head_w, g.head_w, head_w.m, head_w.v, config.learning_rate, c1, c2);
      adam_update(params.head_b, g.head_b, head_b.m, head_b.v, config.learning_rate, c1, c2);
      for (const auto& [row, grad] : g.embedding) {
        const auto r = static_cast<Eigen::Index>(row);
        Eigen::VectorXd value = params.embeddings.row(r).transpose();
        adam_update(value, grad, emb_m.col(r), emb_v.col(r), config.learning_rate, c1, c2);
        params.embeddings.row(r) = value.transpose();
      }
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
  }
  result.vocab = VocabEmbeddings(std::move(vocab), params.embeddings.cast<float>());
  return result;
}

TfIdfModel::TfIdfModel(std::vector<std::string> vocabulary, Eigen::VectorXd idf, Eigen::MatrixXd projection)
    : vocabulary_(std::move(vocabulary)), idf_(std::move(idf)), projection_(std::move(projection)), fitted_(true) {
  if (static_cast<Eigen::Index>(vocabulary_.size()) != idf_.size() || idf_.size() != projection_.rows()) {
    fail(ErrorCode::kDimensionMismatch, "vocabulary, idf and projection sizes disagree");
  }
  if (!idf_.allFinite() || (idf_.array() < 0.0).any()) fail(ErrorCode::kNonFinite, "idf weights must be finite and >= 0");
  for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
    if (!index_.emplace(vocabulary_[i], i).second) fail(ErrorCode::kDuplicateId, "token '" + vocabulary_[i] + "'");
  }
}

std::optional<std::size_t> TfIdfModel::index_of(const std::string& token) const {
  const auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Eigen::VectorXd TfIdfModel::weigh(const TokenList& doc) const {
  if (!fitted_) fail(ErrorCode::kNotFitted, "tf-idf model has not been fitted");
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(vocabulary_.size()));
  for (const auto& t : doc) {
    if (const auto idx = index_of(t)) x(static_cast<Eigen::Index>(*idx)) += 1.0;
  }
  x.array() *= idf_.array();
  const double n = x.norm();
  if (!(n > 0.0)) fail(ErrorCode::kAllTokensOov, "document has no in-vocabulary tokens");
  return x / n;
}

namespace {

Eigen::MatrixXd orthonormal_basis(const Eigen::MatrixXd& y) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(y);
  return qr.householderQ() * Eigen::MatrixXd::Identity(y.rows(), y.cols());
}

}  // namespace

TfIdfFit tfidf_fit(std::span<const TokenList> docs, const TfIdfOptions& options) {
  if (options.reduced_dim < 1) fail(ErrorCode::kInvalidConfig, "reduced_dim must be >= 1");
  std::set<std::string> unique;
  for (const auto& d : docs) unique.insert(d.begin(), d.end());
  if (unique.empty()) fail(ErrorCode::kEmptyVocabulary, "documents contain no tokens");
  std::vector<std::string> vocab(unique.begin(), unique.end());
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < vocab.size(); ++i) index.emplace(vocab[i], i);

  const auto n_docs = static_cast<Eigen::Index>(docs.size());
  const auto n_terms = static_cast<Eigen::Index>(vocab.size());
  std::vector<std::map<std::size_t, double>> counts(docs.size());
  Eigen::VectorXd df = Eigen::VectorXd::Zero(n_terms);
  for (std::size_t d = 0; d < docs.size(); ++d) {
    for (const auto& t : docs[d]) counts[d][index.at(t)] += 1.0;
    for (const auto& [term, c] : counts[d]) df(static_cast<Eigen::Index>(term)) += 1.0;
  }
  const Eigen::VectorXd idf =
      ((1.0 + static_cast<double>(n_docs)) / (1.0 + df.array())).log().matrix() + Eigen::VectorXd::Ones(n_terms);

  std::vector<Eigen::Triplet<double>> entries;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    double sq = 0.0;
    for (const auto& [term, c] : counts[d]) sq += std::pow(c * idf(static_cast<Eigen::Index>(term)), 2);
    const double norm = std::sqrt(sq);
    if (!(norm > 0.0)) continue;
    for (const auto& [term, c] : counts[d]) {
      entries.emplace_back(static_cast<int>(d), static_cast<int>(term), c * idf(static_cast<Eigen::Index>(term)) / norm);
    }
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> x(n_docs, n_terms);
  x.setFromTriplets(entries.begin(), entries.end());

  const Eigen::Index rank_cap = std::min(n_docs, n_terms);
  const Eigen::Index rank = std::min<Eigen::Index>(options.reduced_dim, rank_cap);
  const Eigen::Index width = std::min<Eigen::Index>(rank + options.oversample, rank_cap);

  std::mt19937_64 rng(derive_seed(options.seed, 3));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd omega(n_terms, width);
  for (Eigen::Index c = 0; c < width; ++c)
    for (Eigen::Index r = 0; r < n_terms; ++r) omega(r, c) = normal(rng);

  Eigen::MatrixXd q = orthonormal_basis(Eigen::MatrixXd(x.transpose() * (x * omega)));
  for (int it = 0; it < options.power_iterations; ++it) {
    q = orthonormal_basis(Eigen::MatrixXd(x.transpose() * Eigen::MatrixXd(x * q)));
  }
  const Eigen::MatrixXd b = x * q;  // docs x width
  Eigen::BDCSVD<Eigen::MatrixXd> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::MatrixXd projection = q * svd.matrixV().leftCols(rank);
  Eigen::MatrixXd reduced = svd.matrixU().leftCols(rank) * svd.singularValues().head(rank).asDiagonal();

  for (Eigen::Index c = 0; c < rank; ++c) {
    Eigen::Index arg = 0;
    projection.col(c).cwiseAbs().maxCoeff(&arg);
    if (projection(arg, c) < 0.0) {
      projection.col(c) *= -1.0;
      reduced.col(c) *= -1.0;
    }
  }
  return TfIdfFit{TfIdfModel(std::move(vocab), idf, std::move(projection)), std::move(reduced)};
}

Eigen::VectorXd tfidf_encode(const TfIdfModel& model, const TokenList& doc) {
  const Eigen::VectorXd weighted = model.weigh(doc);
  Eigen::VectorXd out = model.projection().transpose() * weighted;
  if (!(out.squaredNorm() > 0.0)) fail(ErrorCode::kZeroNorm, "document projects to the zero vector");
  return out;
}

namespace {
constexpr std::array<char, 4> kTfIdfMagic = {'T', 'F', 'I', '1'};
}

void save_tfidf(const TfIdfModel& model, const std::filesystem::path& path) {
  if (!model.fitted()) fail(ErrorCode::kNotFitted, "cannot save an unfitted tf-idf model");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out.write(kTfIdfMagic.data(), kTfIdfMagic.size());
  write_le<std::uint64_t>(out, model.vocabulary_size());
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.reduced_dim()));
  for (std::size_t i = 0; i < model.vocabulary_size(); ++i) {
    const auto& t = model.vocabulary()[i];
    write_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.size()));
    out.write(t.data(), static_cast<std::streamsize>(t.size()));
    write_le<double>(out, model.idf()(static_cast<Eigen::Index>(i)));
    for (int c = 0; c < model.reduced_dim(); ++c) write_le<double>(out, model.projection()(static_cast<Eigen::Index>(i), c));
  }
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

TfIdfModel load_tfidf(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kNotFitted, "no tf-idf model at " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kTfIdfMagic) fail(ErrorCode::kFormat, path.string() + ": bad magic, expected TFI1");
  const auto terms = read_le<std::uint64_t>(in, path, "header");
  const auto dim = read_le<std::uint32_t>(in, path, "header");
  std::vector<std::string> vocab(terms);
  Eigen::VectorXd idf(static_cast<Eigen::Index>(terms));
  Eigen::MatrixXd projection(static_cast<Eigen::Index>(terms), dim);
  for (std::uint64_t i = 0; i < terms; ++i) {
    const auto len = read_le<std::uint16_t>(in, path, "token");
    vocab[i].resize(len);
    in.read(vocab[i].data(), len);
    idf(static_cast<Eigen::Index>(i)) = read_le<double>(in, path, "idf");
    for (std::uint32_t c = 0; c < dim; ++c) projection(static_cast<Eigen::Index>(i), c) = read_le<double>(in, path, "projection");
  }
  return TfIdfModel(std::move(vocab), std::move(idf), std::move(projection));
}

}  // namespace xmr
