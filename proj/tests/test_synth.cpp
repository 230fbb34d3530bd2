#include <doctest.h>

#include <map>
#include <set>
#include <sstream>

#include "test_util.hpp"
#include "xmr/synth.hpp"

using namespace xmr;

namespace {

SynthSpec small() {
  SynthSpec s;
  s.n_classes = 12;
  s.items_per_class = 10;
  s.latent_dim = 6;
  s.image_dim = 9;
  s.text_dim = 7;
  return s;
}

}  // namespace

TEST_CASE("generation is deterministic per seed") {
  const auto a = generate(small());
  const auto b = generate(small());
  CHECK(a.train.images().ids() == b.train.images().ids());
  CHECK(a.train.images().matrix() == b.train.images().matrix());
  CHECK(a.test.texts().matrix() == b.test.texts().matrix());
  auto other = small();
  other.seed = 8;
  CHECK(generate(other).train.texts().matrix() != a.train.texts().matrix());
}

TEST_CASE("split is stratified per class") {
  const auto c = generate(small());
  CHECK(c.train.texts().size() == 12 * 8);
  CHECK(c.test.texts().size() == 12 * 2);
  std::map<int, int> test_per_class;
  std::set<std::string> test_texts;
  for (const auto& row : c.truth) {
    if (row.test && test_texts.insert(row.text_id).second) ++test_per_class[row.label];
  }
  CHECK(test_per_class.size() == 12);
  for (const auto& [label, n] : test_per_class) CHECK(n == 2);
  CHECK(c.truth.size() == c.train.images().size() + c.test.images().size());
  for (const auto& id : c.test.texts().ids()) CHECK_FALSE(c.train.texts().index_of(id).has_value());
}

TEST_CASE("images per text follow the configured distribution") {
  auto s = small();
  s.max_images_per_text = 3;
  s.images_per_text = ImagesPerText::kFixed;
  const auto fixed = generate(s);
  for (std::size_t t = 0; t < fixed.train.texts().size(); ++t) CHECK(fixed.train.images_of(t).size() == 3);

  s.images_per_text = ImagesPerText::kUniform;
  const auto uniform = generate(s);
  std::map<std::size_t, int> histogram;
  for (std::size_t t = 0; t < uniform.train.texts().size(); ++t) ++histogram[uniform.train.images_of(t).size()];
  CHECK(histogram.size() == 3);
  CHECK(histogram.begin()->first == 1);
  CHECK(histogram.rbegin()->first == 3);
}

TEST_CASE("changing only the noise keeps ids and structure") {
  auto s = small();
  const auto noisy = generate(s);
  const auto clean = generate(s.noiseless());
  CHECK(noisy.train.images().ids() == clean.train.images().ids());
  CHECK(noisy.test.pairs() == clean.test.pairs());
  CHECK(noisy.train.images().matrix() != clean.train.images().matrix());
}

TEST_CASE("noiseless identity maps put every item on its class center") {
  auto s = small().noiseless();
  s.identity_maps = true;
  s.image_dim = s.text_dim = s.latent_dim;
  const auto c = generate(s);
  for (std::size_t i = 0; i < c.train.images().size(); ++i) {
    const auto t = c.train.text_of(i);
    CHECK((c.train.images().row(i) - c.train.texts().row(t)).cwiseAbs().maxCoeff() == 0.0f);
    CHECK(c.train.images().norm(i) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("noise sigma is relative to unit signal norm") {
  auto s = small();
  s.identity_maps = true;
  s.image_dim = s.text_dim = s.latent_dim = 64;
  s.item_sigma = 0.0;
  s.text_noise_sigma = 0.0;
  s.image_noise_sigma = 0.2;
  s.items_per_class = 40;
  const auto c = generate(s);
  double sum = 0.0;
  for (std::size_t i = 0; i < c.train.images().size(); ++i) {
    sum += (c.train.images().row(i) - c.train.texts().row(c.train.text_of(i))).norm();
  }
  CHECK(sum / double(c.train.images().size()) == doctest::Approx(0.2).epsilon(0.05));
}

TEST_CASE("SynthSpec validation") {
  auto code = [](auto mutate) {
    SynthSpec s;
    mutate(s);
    return test::code_of([&] { s.validate(); });
  };
  CHECK(code([](SynthSpec&) {}) == std::nullopt);
  CHECK(code([](SynthSpec& s) { s.n_classes = 0; }) == ErrorCode::kInvalidConfig);
  CHECK(code([](SynthSpec& s) { s.image_noise_sigma = -1; }) == ErrorCode::kInvalidConfig);
  CHECK(code([](SynthSpec& s) { s.identity_maps = true; }) == ErrorCode::kInvalidConfig);
  CHECK(code([](SynthSpec& s) { s.test_fraction = 1.0; }) == ErrorCode::kInvalidConfig);
  CHECK(code([](SynthSpec& s) { s.max_images_per_text = 0; }) == ErrorCode::kInvalidConfig);
}

TEST_CASE("written corpus reloads to the same data") {
  test::TempDir dir;
  const auto c = generate(small());
  const auto files = write_synth(c, dir.path());
  std::vector<std::string> names;
  for (const auto& f : files) names.push_back(f.filename().string());
  CHECK(names == std::vector<std::string>{"train_images.emb", "train_texts.emb", "train_pairs.tsv", "test_images.emb",
                                          "test_texts.emb", "test_pairs.tsv", "ground_truth.tsv"});
  const auto images = load_embeddings(dir.path() / "test_images.emb");
  CHECK(images.matrix() == c.test.images().matrix());
  CHECK(load_pairs(dir.path() / "train_pairs.tsv") == c.train.pairs());

  std::istringstream truth(test::read_file(dir.path() / "ground_truth.tsv"));
  std::string line;
  std::size_t rows = 0;
  while (std::getline(truth, line)) {
    if (!line.empty() && line[0] != '#') ++rows;
  }
  CHECK(rows == c.truth.size());
}

TEST_CASE("random embeddings are seeded") {
  const std::vector<std::string> ids{"a", "b", "c"};
  CHECK(random_embeddings(ids, 4, 1).matrix() == random_embeddings(ids, 4, 1).matrix());
  CHECK(random_embeddings(ids, 4, 1).matrix() != random_embeddings(ids, 4, 2).matrix());
}

TEST_CASE("synthetic documents draw titles from class keywords") {
  const auto docs = generate_documents(3, 5, 4, 1);
  CHECK(docs.docs.size() == 15);
  CHECK(docs.label[7] == 1);
  for (std::size_t i = 0; i < docs.docs.size(); ++i) {
    const std::string prefix = "kw" + std::to_string(docs.label[i]) + "x";
    CHECK(docs.docs[i].title.rfind(prefix, 0) == 0);
  }
}
