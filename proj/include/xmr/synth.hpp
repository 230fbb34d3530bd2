#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xmr/embedstore.hpp"
#include "xmr/textenc.hpp"

namespace xmr {

enum class ImagesPerText { kFixed, kUniform };

/// Parameters of a synthetic paired corpus with a known linear cross-modal
/// relationship. Noise sigmas are relative to unit signal norm: a sigma of
/// 0.1 adds a noise vector of expected norm 0.1.
struct SynthSpec {
  int n_classes = 100;
  int items_per_class = 50;
  int latent_dim = 32;
  int image_dim = 128;
  int text_dim = 96;
  double image_noise_sigma = 0.1;
  double text_noise_sigma = 0.1;
  /// Spread of item latents around their class center.
  double item_sigma = 0.5;
  ImagesPerText images_per_text = ImagesPerText::kUniform;
  int max_images_per_text = 3;  ///< k: exactly k, or uniform in 1..k
  /// Use identity maps (requires latent_dim == image_dim == text_dim).
  bool identity_maps = false;
  double test_fraction = 0.2;
  std::uint64_t seed = 7;

  void validate() const;

  /// All noise and spread set to zero.
  SynthSpec noiseless() const;
};

struct GroundTruthRow {
  std::string image_id;
  std::string text_id;
  int label = 0;  ///< class
  bool test = false;
};

struct SynthCorpus {
  PairedCorpus train;
  PairedCorpus test;
  std::vector<GroundTruthRow> truth;
};

/// Per-class latent centers on the unit sphere; item latent = center +
/// spread; image = A * latent + noise, text = B * latent + noise for fixed
/// seeded maps. Items split per class: the last test_fraction of each
/// class's items go to the test corpus. Every random stream is drawn
/// regardless of sigma, so specs differing only in sigmas share ids,
/// latents and image counts.
SynthCorpus generate(const SynthSpec& spec);

/// Writes train/test image, text and pair files plus the ground truth;
/// returns the written paths in manifest order.
std::vector<std::filesystem::path> write_synth(const SynthCorpus& corpus, const std::filesystem::path& dir);

/// Gaussian vectors for the given ids; a "random encoder".
EmbeddingSet random_embeddings(const std::vector<std::string>& ids, int dim, std::uint64_t seed);

/// Tiny titled documents: each class owns a keyword vocabulary, titles and
/// bodies mix class keywords with shared filler words.
struct SynthDocs {
  std::vector<Document> docs;
  std::vector<int> label;
};

SynthDocs generate_documents(int n_classes, int docs_per_class, int keywords_per_class, std::uint64_t seed);

}  // namespace xmr
