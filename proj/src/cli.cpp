#include "xmr/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "xmr/cknn.hpp"
#include "xmr/evalharness.hpp"
#include "xmr/synth.hpp"
#include "xmr/textenc.hpp"
#include "xmr/triplet.hpp"

namespace xmr::cli {
namespace {

namespace fs = std::filesystem;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

/// Paths for one corpus split; `--data DIR` fills in the file names that
/// gen-synth writes.
struct SplitPaths {
  std::string images, texts, pairs;
};

struct CorpusFlags {
  std::string data;
  SplitPaths train, test;
};

void add_split(CLI::App* app, SplitPaths& paths, const std::string& split) {
  app->add_option("--" + split + "-images", paths.images, split + " image embeddings (EMB1 or TSV)");
  app->add_option("--" + split + "-texts", paths.texts, split + " text embeddings (EMB1 or TSV)");
  app->add_option("--" + split + "-pairs", paths.pairs, split + " image/text pair file");
}

void add_data_dir(CLI::App* app, CorpusFlags& flags) {
  app->add_option("--data", flags.data, "directory with <split>_images.emb, <split>_texts.emb, <split>_pairs.tsv");
}

PairedCorpus load_split(const CorpusFlags& flags, const SplitPaths& paths, const std::string& split) {
  auto resolve = [&](const std::string& given, const std::string& suffix) {
    if (!given.empty()) return fs::path(given);
    if (flags.data.empty()) {
      fail(ErrorCode::kInvalidConfig, "--" + split + "-" + suffix + " or --data is required");
    }
    return fs::path(flags.data) / (split + "_" + suffix + (suffix == "pairs" ? ".tsv" : ".emb"));
  };
  return join_corpus(load_embeddings(resolve(paths.images, "images")), load_embeddings(resolve(paths.texts, "texts")),
                     load_pairs(resolve(paths.pairs, "pairs")));
}

struct ProtocolFlags {
  std::size_t pool_size = 1000;
  int repeats = 10;
  std::string direction = "image_to_text";
  std::string mode = "pool";
  std::size_t m = 5;
  std::vector<int> recall = {1, 5, 10};
  bool one_image_per_text = false;
  bool allow_overlap = false;
};

void add_protocol(CLI::App* app, ProtocolFlags& p) {
  app->add_option("-N,--N,--pool-size", p.pool_size, "texts sampled per repeat");
  app->add_option("--repeats", p.repeats, "independent repeats");
  app->add_option("--direction", p.direction, "image_to_text or text_to_image")
      ->check(CLI::IsMember({"image_to_text", "text_to_image"}));
  app->add_option("--mode", p.mode, "pool (rank N candidates) or mway (1 true + m-1 distractors)")
      ->check(CLI::IsMember({"pool", "mway"}));
  app->add_option("--m", p.m, "candidates per query in mway mode");
  app->add_option("--recall", p.recall, "comma-separated K values for R@K")->delimiter(',');
  app->add_flag("--one-image-per-text", p.one_image_per_text, "use only the first image of each sampled text");
  app->add_flag("--allow-overlap", p.allow_overlap, "warn instead of failing when test ids occur in training data");
}

EvalProtocol to_protocol(const ProtocolFlags& f, std::uint64_t seed, unsigned threads) {
  EvalProtocol p;
  p.pool_size = f.pool_size;
  p.repeats = f.repeats;
  p.direction = f.direction == "text_to_image" ? Direction::kTextToImage : Direction::kImageToText;
  p.mode = f.mode == "mway" ? EvalMode::kMWay : EvalMode::kPoolRanking;
  p.m = f.m;
  p.recall_ranks = f.recall;
  p.one_image_per_text = f.one_image_per_text;
  p.overlap = f.allow_overlap ? OverlapPolicy::kWarn : OverlapPolicy::kError;
  p.seed = seed;
  p.threads = threads;
  p.validate();
  return p;
}

void add_cknn(CLI::App* app, CkNNConfig& c, bool& all_texts) {
  app->add_option("--alpha", c.alpha, "weight of the image-space term");
  app->add_option("--kt", c.k_t, "text neighbours for the image-space representation");
  app->add_option("--ki", c.k_i, "image neighbours for the text-space representation");
  app->add_flag("--all-texts", all_texts, "also search training texts that have no image");
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  return out;
}

void emit_report(const MetricsReport& report, const std::string& tsv, std::ostream& out) {
  write_report_table(report, out);
  if (tsv.empty()) return;
  auto file = open_out(tsv);
  write_report_tsv(report, file);
  if (!file) fail(ErrorCode::kIo, "write failed for " + tsv);
}

/// Common flags every command carries.
struct Common {
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string config;
};

void add_common(CLI::App* app, Common& c, std::uint64_t default_seed) {
  c.seed = default_seed;
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--threads", c.threads, "worker threads (0 = all cores)");
  app->add_option("--config", c.config, "file of key=value lines; command-line flags take precedence");
}

/// Expands `--config FILE` into `--key=value` arguments placed before the
/// command-line ones, skipping keys the command line sets itself.
std::vector<std::string> expand_config(const std::vector<std::string>& args, const CLI::App& root) {
  if (args.empty()) return args;
  std::string path;
  std::set<std::string> given;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const auto& a = args[i];
    if (a.rfind("--", 0) != 0) continue;
    const auto eq = a.find('=');
    const std::string key = a.substr(2, eq == std::string::npos ? std::string::npos : eq - 2);
    given.insert(key);
    if (key == "config") {
      if (eq != std::string::npos) path = a.substr(eq + 1);
      else if (i + 1 < args.size()) path = args[i + 1];
    }
  }
  if (path.empty()) return args;

  const CLI::App* sub = nullptr;
  for (const auto* s : root.get_subcommands({})) {
    if (s->check_name(args[0])) sub = s;
  }
  if (!sub) return args;

  std::ifstream in(path);
  if (!in) throw CLI::FileError::Missing(path);
  std::vector<std::string> injected;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw CLI::ConversionError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = CLI::detail::trim_copy(line.substr(0, eq));
    std::string value = CLI::detail::trim_copy(line.substr(eq + 1));
    if (key == "config" || sub->get_option_no_throw("--" + key) == nullptr) {
      throw CLI::ExtrasError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'",
                             CLI::ExitCodes::ExtrasError);
    }
    if (!given.contains(key)) injected.push_back("--" + key + "=" + value);
  }
  std::vector<std::string> out{args[0]};
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

std::string fmt_loss(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<NamedSet> load_named(const std::vector<std::string>& specs, const char* flag) {
  std::vector<NamedSet> sets;
  for (const auto& s : specs) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == s.size()) {
      fail(ErrorCode::kInvalidConfig, std::string(flag) + " expects name=path, got '" + s + "'");
    }
    sets.emplace_back(s.substr(0, eq), load_embeddings(s.substr(eq + 1)));
  }
  return sets;
}

TokenList doc_tokens(const Document& d, const std::string& field) {
  if (field == "title") return tokenize(d.title);
  if (field == "body") return tokenize(d.body);
  return tokenize(d.title + " " + d.body);
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-modal retrieval over precomputed image and text embeddings", "xmr"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.get_formatter()->column_width(40);

  // gen-synth
  SynthSpec synth;
  std::string synth_out;
  std::string synth_images_per_text = "uniform";
  Common synth_common;
  auto* gen = app.add_subcommand("gen-synth", "write a synthetic paired corpus with ground truth");
  add_common(gen, synth_common, synth.seed);
  gen->add_option("--out", synth_out, "output directory")->required();
  gen->add_option("--classes", synth.n_classes, "number of classes");
  gen->add_option("--items-per-class", synth.items_per_class, "texts per class");
  gen->add_option("--latent-dim", synth.latent_dim, "latent dimension");
  gen->add_option("--image-dim", synth.image_dim, "image embedding dimension");
  gen->add_option("--text-dim", synth.text_dim, "text embedding dimension");
  gen->add_option("--image-sigma", synth.image_noise_sigma, "image noise, relative to unit signal");
  gen->add_option("--text-sigma", synth.text_noise_sigma, "text noise, relative to unit signal");
  gen->add_option("--item-sigma", synth.item_sigma, "spread of items around their class center");
  gen->add_option("--images-per-text", synth_images_per_text, "fixed (exactly k) or uniform (1..k)")
      ->check(CLI::IsMember({"fixed", "uniform"}));
  gen->add_option("--max-images", synth.max_images_per_text, "k for --images-per-text");
  gen->add_flag("--identity-maps", synth.identity_maps, "use identity maps instead of random linear maps");
  gen->add_option("--test-fraction", synth.test_fraction, "share of each class held out for test");

  // cknn-eval
  CorpusFlags cknn_corpus;
  CkNNConfig cknn;
  bool cknn_all_texts = false;
  ProtocolFlags cknn_protocol;
  std::string cknn_out;
  Common cknn_common;
  auto* cknn_eval = app.add_subcommand("cknn-eval", "evaluate the CkNN alignment on a test split");
  add_common(cknn_eval, cknn_common, 0);
  add_data_dir(cknn_eval, cknn_corpus);
  add_split(cknn_eval, cknn_corpus.train, "train");
  add_split(cknn_eval, cknn_corpus.test, "test");
  add_cknn(cknn_eval, cknn, cknn_all_texts);
  add_protocol(cknn_eval, cknn_protocol);
  cknn_eval->add_option("--out", cknn_out, "TSV report path");

  // triplet-train
  CorpusFlags train_corpus;
  TripletConfig tcfg;
  std::string train_anchor = "image";
  bool no_alternating = false;
  std::string checkpoint_out, loss_out;
  Common train_common;
  auto* ttrain = app.add_subcommand("triplet-train", "train the triplet alignment head");
  add_common(ttrain, train_common, tcfg.seed);
  add_data_dir(ttrain, train_corpus);
  add_split(ttrain, train_corpus.train, "train");
  ttrain->add_option("--margin", tcfg.margin, "triplet margin");
  ttrain->add_option("--output-dim", tcfg.output_dim, "shared space dimension");
  ttrain->add_option("--hidden-dim", tcfg.hidden_dim, "hidden layer width");
  ttrain->add_option("--dropout", tcfg.dropout_rate, "dropout rate");
  ttrain->add_option("--batch-size", tcfg.batch_size, "mini-batch size");
  ttrain->add_option("--lr", tcfg.learning_rate, "Adam learning rate");
  ttrain->add_option("--epochs", tcfg.epochs, "training epochs");
  ttrain->add_flag("--no-alternating", no_alternating, "update both towers every epoch");
  ttrain->add_option("--anchor", train_anchor, "anchor modality")->check(CLI::IsMember({"image", "text"}));
  ttrain->add_option("--checkpoint", checkpoint_out, "checkpoint output path")->required();
  ttrain->add_option("--out", loss_out, "loss trace TSV (default: <checkpoint>.loss.tsv)");

  // triplet-eval
  CorpusFlags teval_corpus;
  std::string checkpoint_in, teval_out;
  ProtocolFlags teval_protocol;
  Common teval_common;
  auto* teval = app.add_subcommand("triplet-eval", "evaluate a triplet checkpoint by cosine search");
  add_common(teval, teval_common, 0);
  add_data_dir(teval, teval_corpus);
  add_split(teval, teval_corpus.test, "test");
  teval->add_option("--checkpoint", checkpoint_in, "checkpoint to evaluate")->required();
  add_protocol(teval, teval_protocol);
  teval->add_option("--out", teval_out, "TSV report path");

  // grid
  std::vector<std::string> grid_images, grid_texts;
  std::string grid_train_pairs, grid_test_pairs, grid_out;
  CkNNConfig grid_cknn;
  bool grid_all_texts = false;
  ProtocolFlags grid_protocol;
  Common grid_common;
  auto* grid = app.add_subcommand("grid", "CkNN over every image/text encoder combination");
  add_common(grid, grid_common, 0);
  grid->add_option("--image", grid_images, "image encoder as name=path (repeatable)")->required();
  grid->add_option("--text", grid_texts, "text encoder as name=path (repeatable)")->required();
  grid->add_option("--train-pairs", grid_train_pairs, "training pair file")->required();
  grid->add_option("--test-pairs", grid_test_pairs, "test pair file")->required();
  add_cknn(grid, grid_cknn, grid_all_texts);
  add_protocol(grid, grid_protocol);
  grid->add_option("--out", grid_out, "TSV report path");

  // encode-text
  std::string enc_docs, enc_encoder, enc_vocab, enc_model, enc_out, enc_field = "body", enc_oov = "skip";
  bool enc_fit = false;
  TfIdfOptions tfidf_options;
  Common enc_common;
  auto* encode = app.add_subcommand("encode-text", "encode documents with AWE or TF-IDF");
  add_common(encode, enc_common, 0);
  encode->add_option("--docs", enc_docs, "documents TSV: id, title, body")->required();
  encode->add_option("--encoder", enc_encoder, "awe or tfidf")->required()->check(CLI::IsMember({"awe", "tfidf"}));
  encode->add_option("--vocab", enc_vocab, "word vectors for awe");
  encode->add_option("--model", enc_model, "tfidf model file");
  encode->add_flag("--fit", enc_fit, "fit the tfidf model on --docs and save it to --model");
  encode->add_option("--reduced-dim", tfidf_options.reduced_dim, "tfidf reduced dimension when fitting");
  encode->add_option("--field", enc_field, "document text to encode")->check(CLI::IsMember({"title", "body", "all"}));
  encode->add_option("--oov", enc_oov, "skip or error on out-of-vocabulary tokens (awe)")
      ->check(CLI::IsMember({"skip", "error"}));
  encode->add_option("--out", enc_out, "output embeddings (EMB1 or .tsv)")->required();

  // train-awe
  std::string awe_docs, awe_out, awe_loss_out, awe_field = "body";
  std::size_t awe_threshold = 20;
  AweTrainConfig awe;
  Common awe_common;
  auto* tawe = app.add_subcommand("train-awe", "train AWE word vectors from title-derived labels");
  add_common(tawe, awe_common, awe.seed);
  tawe->add_option("--docs", awe_docs, "documents TSV: id, title, body")->required();
  tawe->add_option("--threshold", awe_threshold, "minimum title document frequency of a label");
  tawe->add_option("--field", awe_field, "document text fed to the encoder")->check(CLI::IsMember({"title", "body", "all"}));
  tawe->add_option("--dim", awe.dim, "word vector dimension");
  tawe->add_option("--epochs", awe.epochs, "training epochs");
  tawe->add_option("--batch-size", awe.batch_size, "mini-batch size");
  tawe->add_option("--lr", awe.learning_rate, "Adam learning rate");
  tawe->add_option("--out", awe_out, "word vector output file")->required();
  tawe->add_option("--loss-out", awe_loss_out, "loss trace TSV");

  try {
    auto args = expand_config(raw_args, app);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    auto* target = &app;
    for (auto* s : app.get_subcommands()) target = s;
    out << target->help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    auto* target = &app;
    for (auto* s : app.get_subcommands()) target = s;
    err << target->help();
    return kExitUsage;
  }

  try {
    if (*gen) {
      synth.seed = synth_common.seed;
      synth.images_per_text = synth_images_per_text == "fixed" ? ImagesPerText::kFixed : ImagesPerText::kUniform;
      for (const auto& p : write_synth(generate(synth), synth_out)) out << p.string() << '\n';
    } else if (*cknn_eval) {
      cknn.restrict_to_paired = !cknn_all_texts;
      const auto protocol = to_protocol(cknn_protocol, cknn_common.seed, cknn_common.threads);
      const CkNNModel model(load_split(cknn_corpus, cknn_corpus.train, "train"), cknn);
      const auto test = load_split(cknn_corpus, cknn_corpus.test, "test");
      emit_report(run_eval(CkNNRanker(model, cknn_common.threads), test, protocol), cknn_out, out);
    } else if (*ttrain) {
      tcfg.seed = train_common.seed;
      tcfg.alternating = !no_alternating;
      tcfg.anchor = train_anchor == "text" ? AnchorModality::kText : AnchorModality::kImage;
      const auto corpus = load_split(train_corpus, train_corpus.train, "train");
      const auto result = train_triplet(corpus, tcfg, [&](int epoch, double loss) {
        out << "epoch " << epoch << " loss " << fmt_loss(loss) << '\n' << std::flush;
      });
      save_checkpoint(result.model, checkpoint_out);
      const std::string trace = loss_out.empty() ? checkpoint_out + ".loss.tsv" : loss_out;
      auto file = open_out(trace);
      file << "epoch\tloss\n";
      for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) file << e << '\t' << fmt_loss(result.epoch_loss[e]) << '\n';
      if (!file) fail(ErrorCode::kIo, "write failed for " + trace);
      out << "wrote " << checkpoint_out << " and " << trace << '\n';
    } else if (*teval) {
      const auto protocol = to_protocol(teval_protocol, teval_common.seed, teval_common.threads);
      const auto model = load_checkpoint(checkpoint_in);
      const auto test = load_split(teval_corpus, teval_corpus.test, "test");
      const auto projected = join_corpus(project(model, test.images(), Modality::kImage, teval_common.threads),
                                         project(model, test.texts(), Modality::kText, teval_common.threads),
                                         test.pairs());
      emit_report(run_eval(CosineRanker{}, projected, protocol), teval_out, out);
    } else if (*grid) {
      grid_cknn.restrict_to_paired = !grid_all_texts;
      const auto protocol = to_protocol(grid_protocol, grid_common.seed, grid_common.threads);
      const auto images = load_named(grid_images, "--image");
      const auto texts = load_named(grid_texts, "--text");
      const auto report = grid_compare(images, texts, load_pairs(grid_train_pairs), load_pairs(grid_test_pairs),
                                       protocol, grid_cknn);
      write_grid_table(report, out);
      if (!grid_out.empty()) {
        auto file = open_out(grid_out);
        write_grid_tsv(report, file);
        if (!file) fail(ErrorCode::kIo, "write failed for " + grid_out);
      }
    } else if (*encode) {
      const auto docs = load_documents(enc_docs);
      std::vector<TokenList> tokens;
      tokens.reserve(docs.size());
      for (const auto& d : docs) tokens.push_back(doc_tokens(d, enc_field));

      std::vector<std::string> ids;
      std::vector<Eigen::VectorXd> rows;
      auto encode_all = [&](auto&& encode_one) {
        for (std::size_t i = 0; i < docs.size(); ++i) {
          try {
            rows.push_back(encode_one(tokens[i]));
          } catch (const Error& e) {
            throw Error(e.code(), "document '" + docs[i].id + "': " + e.what());
          }
          ids.push_back(docs[i].id);
        }
      };
      if (enc_encoder == "awe") {
        if (enc_vocab.empty()) fail(ErrorCode::kInvalidConfig, "--vocab is required for the awe encoder");
        auto vocab = load_word_vectors(enc_vocab);
        vocab.set_oov_policy(enc_oov == "error" ? OovPolicy::kError : OovPolicy::kSkip);
        encode_all([&](const TokenList& t) { return awe_encode(vocab, t); });
      } else {
        TfIdfModel model;
        if (enc_fit) {
          tfidf_options.seed = enc_common.seed;
          model = tfidf_fit(tokens, tfidf_options).model;
          if (!enc_model.empty()) save_tfidf(model, enc_model);
        } else {
          if (enc_model.empty()) fail(ErrorCode::kNotFitted, "tfidf needs --fit or a fitted --model");
          model = load_tfidf(enc_model);
        }
        encode_all([&](const TokenList& t) { return tfidf_encode(model, t); });
      }
      RowMatrixXf matrix(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : rows.front().size());
      for (std::size_t i = 0; i < rows.size(); ++i) matrix.row(static_cast<Eigen::Index>(i)) = rows[i].transpose().cast<float>();
      save_embeddings(EmbeddingSet(std::move(ids), std::move(matrix)), enc_out);
      out << "wrote " << rows.size() << " embeddings to " << enc_out << '\n';
    } else if (*tawe) {
      awe.seed = awe_common.seed;
      const auto docs = load_documents(awe_docs);
      std::vector<TokenList> titles, bodies;
      for (const auto& d : docs) {
        titles.push_back(tokenize(d.title));
        bodies.push_back(doc_tokens(d, awe_field));
      }
      const auto labels = extract_labels(titles, awe_threshold);
      std::vector<std::vector<std::size_t>> per_doc;
      for (const auto& t : titles) per_doc.push_back(assign_labels(t, labels));
      const auto result = train_awe(bodies, per_doc, labels.labels.size(), awe);
      save_word_vectors(result.vocab, awe_out);
      for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
        out << "epoch " << e << " loss " << fmt_loss(result.epoch_loss[e]) << '\n';
      }
      if (!awe_loss_out.empty()) {
        auto file = open_out(awe_loss_out);
        file << "epoch\tloss\n";
        for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) file << e << '\t' << fmt_loss(result.epoch_loss[e]) << '\n';
      }
      out << labels.labels.size() << " labels, " << result.vocab.size() << " words written to " << awe_out << '\n';
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace xmr::cli
