#include "xmr/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "xmr/random.hpp"

namespace xmr {

void SynthSpec::validate() const {
  if (n_classes < 1 || items_per_class < 1) fail(ErrorCode::kInvalidConfig, "need at least one class and item");
  if (latent_dim < 1 || image_dim < 1 || text_dim < 1) fail(ErrorCode::kInvalidConfig, "all dims must be positive");
  if (!(image_noise_sigma >= 0.0) || !(text_noise_sigma >= 0.0) || !(item_sigma >= 0.0)) {
    fail(ErrorCode::kInvalidConfig, "sigmas must be >= 0");
  }
  if (max_images_per_text < 1) fail(ErrorCode::kInvalidConfig, "images per text must be >= 1");
  if (identity_maps && (image_dim != latent_dim || text_dim != latent_dim)) {
    fail(ErrorCode::kInvalidConfig, "identity maps need latent_dim == image_dim == text_dim");
  }
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) fail(ErrorCode::kInvalidConfig, "test_fraction must lie in [0, 1)");
}

SynthSpec SynthSpec::noiseless() const {
  SynthSpec s = *this;
  s.image_noise_sigma = 0.0;
  s.text_noise_sigma = 0.0;
  s.item_sigma = 0.0;
  return s;
}

namespace {

enum Stream : std::uint64_t { kCenters = 10, kMaps, kItems, kCounts, kImageNoise, kTextNoise };

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, sd);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
  return m;
}

std::string pad(int value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*d", width, value);
  return buf;
}

int digits(int n) { return n <= 1 ? 1 : static_cast<int>(std::to_string(n - 1).size()); }

struct Split {
  std::vector<std::string> image_ids, text_ids;
  std::vector<Eigen::VectorXf> images, texts;
  std::vector<IdPair> pairs;
};

EmbeddingSet to_set(std::vector<std::string> ids, const std::vector<Eigen::VectorXf>& rows, int dim) {
  RowMatrixXf m(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return EmbeddingSet(std::move(ids), std::move(m));
}

}  // namespace

SynthCorpus generate(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 center_rng(derive_seed(spec.seed, kCenters));
  std::mt19937_64 map_rng(derive_seed(spec.seed, kMaps));
  std::mt19937_64 item_rng(derive_seed(spec.seed, kItems));
  std::mt19937_64 count_rng(derive_seed(spec.seed, kCounts));
  std::mt19937_64 image_rng(derive_seed(spec.seed, kImageNoise));
  std::mt19937_64 text_rng(derive_seed(spec.seed, kTextNoise));

  Eigen::MatrixXd centers = gaussian(spec.n_classes, spec.latent_dim, 1.0, center_rng);
  centers.rowwise().normalize();
  Eigen::MatrixXd to_image = gaussian(spec.image_dim, spec.latent_dim, 1.0 / std::sqrt(double(spec.image_dim)), map_rng);
  Eigen::MatrixXd to_text = gaussian(spec.text_dim, spec.latent_dim, 1.0 / std::sqrt(double(spec.text_dim)), map_rng);
  if (spec.identity_maps) {
    to_image = Eigen::MatrixXd::Identity(spec.image_dim, spec.latent_dim);
    to_text = Eigen::MatrixXd::Identity(spec.text_dim, spec.latent_dim);
  }

  const int train_items = static_cast<int>(std::lround(spec.items_per_class * (1.0 - spec.test_fraction)));
  std::uniform_int_distribution<int> uniform_count(1, spec.max_images_per_text);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto noise = [&](int dim, std::mt19937_64& rng) {
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v(i) = normal(rng);
    return v;
  };

  Split train, test;
  SynthCorpus out;
  const int class_w = digits(spec.n_classes);
  const int item_w = digits(spec.items_per_class);
  for (int c = 0; c < spec.n_classes; ++c) {
    for (int j = 0; j < spec.items_per_class; ++j) {
      const bool is_test = j >= train_items;
      Split& split = is_test ? test : train;
      const std::string text_id = "c" + pad(c, class_w) + "_i" + pad(j, item_w);
      const Eigen::VectorXd latent = centers.row(c).transpose() +
                                     noise(spec.latent_dim, item_rng) * (spec.item_sigma / std::sqrt(double(spec.latent_dim)));
      const Eigen::VectorXd text = to_text * latent +
                                   noise(spec.text_dim, text_rng) * (spec.text_noise_sigma / std::sqrt(double(spec.text_dim)));
      split.text_ids.push_back(text_id);
      split.texts.push_back(text.cast<float>());
      const int count = spec.images_per_text == ImagesPerText::kFixed ? spec.max_images_per_text : uniform_count(count_rng);
      for (int m = 0; m < count; ++m) {
        const std::string image_id = text_id + "_m" + std::to_string(m);
        const Eigen::VectorXd image =
            to_image * latent + noise(spec.image_dim, image_rng) * (spec.image_noise_sigma / std::sqrt(double(spec.image_dim)));
        split.image_ids.push_back(image_id);
        split.images.push_back(image.cast<float>());
        split.pairs.emplace_back(image_id, text_id);
        out.truth.push_back({image_id, text_id, c, is_test});
      }
    }
  }
  auto build = [&](Split& s) {
    return join_corpus(to_set(std::move(s.image_ids), s.images, spec.image_dim),
                       to_set(std::move(s.text_ids), s.texts, spec.text_dim), s.pairs);
  };
  out.train = build(train);
  if (!test.text_ids.empty()) out.test = build(test);
  return out;
}

std::vector<std::filesystem::path> write_synth(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  auto emit = [&](const PairedCorpus& c, const std::string& split) {
    const auto images = dir / (split + "_images.emb");
    const auto texts = dir / (split + "_texts.emb");
    const auto pairs = dir / (split + "_pairs.tsv");
    save_embeddings(c.images(), images, EmbeddingFormat::kBinary);
    save_embeddings(c.texts(), texts, EmbeddingFormat::kBinary);
    save_pairs(c.pairs(), pairs);
    written.insert(written.end(), {images, texts, pairs});
  };
  emit(corpus.train, "train");
  emit(corpus.test, "test");

  const auto truth = dir / "ground_truth.tsv";
  std::ofstream out(truth, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + truth.string());
  out << "# image_id\ttext_id\tclass\tsplit\n";
  for (const auto& row : corpus.truth) {
    out << row.image_id << '\t' << row.text_id << '\t' << row.label << '\t' << (row.test ? "test" : "train") << '\n';
  }
  if (!out) fail(ErrorCode::kIo, "write failed for " + truth.string());
  written.push_back(truth);
  return written;
}

EmbeddingSet random_embeddings(const std::vector<std::string>& ids, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 99));
  std::normal_distribution<float> normal(0.0f, 1.0f);
  RowMatrixXf m(static_cast<Eigen::Index>(ids.size()), dim);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return EmbeddingSet(ids, std::move(m));
}

SynthDocs generate_documents(int n_classes, int docs_per_class, int keywords_per_class, std::uint64_t seed) {
  static const char* const kFiller[] = {"add", "mix", "the", "and", "with", "bake", "cook", "stir", "heat", "serve"};
  constexpr int kFillerCount = static_cast<int>(std::size(kFiller));
  std::mt19937_64 rng(derive_seed(seed, 42));
  std::uniform_int_distribution<int> pick_keyword(0, keywords_per_class - 1);
  std::uniform_int_distribution<int> pick_filler(0, kFillerCount - 1);
  std::uniform_int_distribution<int> title_len(1, 3);
  std::uniform_int_distribution<int> body_len(4, 12);
  auto keyword = [](int c, int k) { return "kw" + std::to_string(c) + "x" + std::to_string(k); };

  SynthDocs out;
  for (int c = 0; c < n_classes; ++c) {
    for (int d = 0; d < docs_per_class; ++d) {
      Document doc;
      doc.id = "doc" + std::to_string(c) + "_" + std::to_string(d);
      const int tl = title_len(rng);
      for (int t = 0; t < tl; ++t) doc.title += (t ? " " : "") + keyword(c, pick_keyword(rng));
      const int bl = body_len(rng);
      for (int t = 0; t < bl; ++t) {
        if (t) doc.body += ' ';
        doc.body += (t % 2 == 0) ? keyword(c, pick_keyword(rng)) : std::string(kFiller[pick_filler(rng)]);
      }
      out.docs.push_back(std::move(doc));
      out.label.push_back(c);
    }
  }
  return out;
}

}  // namespace xmr
