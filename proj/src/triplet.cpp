#include "xmr/triplet.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <numeric>
#include <sstream>

#include "xmr/detail/binary_io.hpp"
#include "xmr/parallel.hpp"
#include "xmr/random.hpp"

namespace xmr {

using detail::read_le;
using detail::write_le;

void TripletConfig::validate() const {
  if (!(margin >= 0.0)) fail(ErrorCode::kInvalidConfig, "margin must be >= 0");
  if (output_dim < 1) fail(ErrorCode::kInvalidConfig, "output_dim must be >= 1");
  if (hidden_dim < 1) fail(ErrorCode::kInvalidConfig, "hidden_dim must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail(ErrorCode::kInvalidConfig, "dropout_rate must lie in [0, 1)");
  if (batch_size < 2) fail(ErrorCode::kInvalidConfig, "batch_size must be >= 2");
  if (!(learning_rate > 0.0)) fail(ErrorCode::kInvalidConfig, "learning_rate must be > 0");
  if (epochs < 0) fail(ErrorCode::kInvalidConfig, "epochs must be >= 0");
}

namespace {

enum Stream : std::uint64_t { kInitStream = 1, kShuffleStream = 2, kDropoutStream = 3 };

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

struct AdamState {
  TowerParams<double> m;
  TowerParams<double> v;
  long step = 0;
};

std::vector<std::span<double>> trainable_spans(TowerParams<double>& p) {
  std::vector<std::span<double>> spans;
  p.for_each_trainable([&](std::span<double> s) { spans.push_back(s); });
  return spans;
}

void adam_step(TowerParams<double>& params, TowerParams<double>& grad, AdamState& state, double lr) {
  ++state.step;
  const double correction1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  auto p = trainable_spans(params);
  auto g = trainable_spans(grad);
  auto m = trainable_spans(state.m);
  auto v = trainable_spans(state.v);
  for (std::size_t t = 0; t < p.size(); ++t) {
    for (std::size_t i = 0; i < p[t].size(); ++i) {
      m[t][i] = kAdamBeta1 * m[t][i] + (1.0 - kAdamBeta1) * g[t][i];
      v[t][i] = kAdamBeta2 * v[t][i] + (1.0 - kAdamBeta2) * g[t][i] * g[t][i];
      const double m_hat = m[t][i] / correction1;
      const double v_hat = v[t][i] / correction2;
      p[t][i] -= lr * m_hat / (std::sqrt(v_hat) + kAdamEps);
    }
  }
}

Eigen::MatrixXd gather_rows(const EmbeddingSet& set, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), set.dim());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = set.row(rows[r]).cast<double>();
  }
  return out;
}

}  // namespace

TripletModel init_triplet_model(int image_dim, int text_dim, const TripletConfig& config) {
  config.validate();
  std::mt19937_64 rng(derive_seed(config.seed, kInitStream));
  TripletModel model;
  model.config = config;
  model.image_tower = TowerParams<double>::init(image_dim, config.hidden_dim, config.output_dim, rng);
  model.text_tower = TowerParams<double>::init(text_dim, config.hidden_dim, config.output_dim, rng);
  return model;
}

TripletTrainResult train_triplet(const PairedCorpus& corpus, const TripletConfig& config,
                                 const std::function<void(int, double)>& on_epoch) {
  config.validate();
  const std::size_t n = corpus.images().size();
  if (n < config.batch_size) {
    fail(ErrorCode::kInvalidConfig,
         "corpus has " + std::to_string(n) + " pairs, fewer than batch_size " + std::to_string(config.batch_size));
  }
  TripletTrainResult result;
  result.model = init_triplet_model(corpus.images().dim(), corpus.texts().dim(), config);
  auto& model = result.model;

  std::mt19937_64 shuffle_rng(derive_seed(config.seed, kShuffleStream));
  std::mt19937_64 dropout_rng(derive_seed(config.seed, kDropoutStream));
  AdamState image_adam{model.image_tower.zeros_like(), model.image_tower.zeros_like(), 0};
  AdamState text_adam{model.text_tower.zeros_like(), model.text_tower.zeros_like(), 0};

  std::vector<std::size_t> order(n);
  std::vector<std::size_t> batch_images(config.batch_size);
  std::vector<std::size_t> batch_texts(config.batch_size);
  const std::size_t batches = n / config.batch_size;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const bool update_image = !config.alternating || epoch % 2 == 0;
    const bool update_text = !config.alternating || epoch % 2 == 1;

    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      for (std::size_t r = 0; r < config.batch_size; ++r) {
        batch_images[r] = order[b * config.batch_size + r];
        batch_texts[r] = corpus.text_of(batch_images[r]);
      }
      const Eigen::MatrixXd images = gather_rows(corpus.images(), batch_images);
      const Eigen::MatrixXd texts = gather_rows(corpus.texts(), batch_texts);
      auto g = triplet_gradients<double>(model.image_tower, model.text_tower, images, texts, batch_texts,
                                         config.margin, config.anchor, config.dropout_rate, &dropout_rng,
                                         update_image, update_text);
      if (!std::isfinite(g.loss)) {
        std::ostringstream msg;
        msg << "epoch " << epoch << " batch " << b << " loss " << g.loss;
        fail(ErrorCode::kNonFiniteLoss, msg.str());
      }
      loss_sum += g.loss;
      if (update_image) {
        adam_step(model.image_tower, g.image, image_adam, config.learning_rate);
        update_running_stats(model.image_tower, g.image_cache, config.batch_size);
      }
      if (update_text) {
        adam_step(model.text_tower, g.text, text_adam, config.learning_rate);
        update_running_stats(model.text_tower, g.text_cache, config.batch_size);
      }
      if (!model.image_tower.all_finite() || !model.text_tower.all_finite()) {
        fail(ErrorCode::kNonFiniteLoss, "parameters became non-finite at epoch " + std::to_string(epoch) +
                                            " batch " + std::to_string(b));
      }
    }
    const double epoch_loss = loss_sum / static_cast<double>(batches);
    result.epoch_loss.push_back(epoch_loss);
    model.trained_epochs = epoch + 1;
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  return result;
}

EmbeddingSet project(const TripletModel& model, const EmbeddingSet& set, Modality modality, unsigned threads) {
  const auto& tower = modality == Modality::kImage ? model.image_tower : model.text_tower;
  if (set.dim() != tower.input_dim()) {
    fail(ErrorCode::kDimensionMismatch, std::string(to_string(modality)) + " tower expects dim " +
                                            std::to_string(tower.input_dim()) + ", set has " + std::to_string(set.dim()));
  }
  RowMatrixXf out(static_cast<Eigen::Index>(set.size()), tower.output_dim());
  parallel_for(set.size(), threads, [&](std::size_t i) {
    const Eigen::MatrixXd x = set.row(i).cast<double>();
    out.row(static_cast<Eigen::Index>(i)) = tower_forward(tower, x, TowerMode::kEval).cast<float>();
  });
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (!(squared_norm64(out.row(static_cast<Eigen::Index>(i))) > 0.0)) {
      fail(ErrorCode::kZeroNorm, "projection of '" + set.id(i) + "' is the zero vector");
    }
  }
  return EmbeddingSet(set.ids(), std::move(out));
}

namespace {

constexpr std::array<char, 4> kCheckpointMagic = {'T', 'P', 'L', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename Derived>
void write_tensor(std::ostream& out, const Eigen::MatrixBase<Derived>& t) {
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rows()));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.cols()));
  for (Eigen::Index r = 0; r < t.rows(); ++r)
    for (Eigen::Index c = 0; c < t.cols(); ++c) write_le<float>(out, static_cast<float>(t(r, c)));
}

Eigen::MatrixXd read_tensor(std::istream& in, const std::filesystem::path& path, const char* name,
                            Eigen::Index rows, Eigen::Index cols) {
  const auto r = read_le<std::uint32_t>(in, path, name);
  const auto c = read_le<std::uint32_t>(in, path, name);
  if (r != rows || c != cols) {
    fail(ErrorCode::kFormat, path.string() + ": tensor " + name + " has shape " + std::to_string(r) + "x" +
                                 std::to_string(c) + ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  Eigen::MatrixXd t(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) t(i, j) = read_le<float>(in, path, name);
  return t;
}

void write_tower(std::ostream& out, const TowerParams<double>& p) {
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.input_dim()));
  write_tensor(out, p.w1);
  write_tensor(out, p.b1);
  write_tensor(out, p.bn_gamma);
  write_tensor(out, p.bn_beta);
  write_tensor(out, p.bn_running_mean);
  write_tensor(out, p.bn_running_var);
  write_tensor(out, p.w2);
  write_tensor(out, p.b2);
}

TowerParams<double> read_tower(std::istream& in, const std::filesystem::path& path, const TripletConfig& config) {
  const Eigen::Index input = read_le<std::uint32_t>(in, path, "tower input dim");
  const Eigen::Index hidden = config.hidden_dim;
  const Eigen::Index output = config.output_dim;
  TowerParams<double> p;
  p.w1 = read_tensor(in, path, "w1", hidden, input);
  p.b1 = read_tensor(in, path, "b1", hidden, 1);
  p.bn_gamma = read_tensor(in, path, "bn_gamma", hidden, 1);
  p.bn_beta = read_tensor(in, path, "bn_beta", hidden, 1);
  p.bn_running_mean = read_tensor(in, path, "bn_running_mean", hidden, 1);
  p.bn_running_var = read_tensor(in, path, "bn_running_var", hidden, 1);
  p.w2 = read_tensor(in, path, "w2", output, hidden);
  p.b2 = read_tensor(in, path, "b2", output, 1);
  if (!p.all_finite()) fail(ErrorCode::kFormat, path.string() + ": non-finite or negative-variance tower");
  return p;
}

}  // namespace

void save_checkpoint(const TripletModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  const auto& c = model.config;
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  write_le<std::uint32_t>(out, kCheckpointVersion);
  write_le<double>(out, c.margin);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.output_dim));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.hidden_dim));
  write_le<double>(out, c.dropout_rate);
  write_le<std::uint64_t>(out, c.batch_size);
  write_le<double>(out, c.learning_rate);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.epochs));
  write_le<std::uint64_t>(out, c.seed);
  write_le<std::uint8_t>(out, c.alternating ? 1 : 0);
  write_le<std::uint8_t>(out, c.anchor == AnchorModality::kText ? 1 : 0);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.trained_epochs));
  write_tower(out, model.image_tower);
  write_tower(out, model.text_tower);
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

TripletModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kCheckpointMagic) fail(ErrorCode::kFormat, path.string() + ": bad magic, expected TPL1");
  const auto version = read_le<std::uint32_t>(in, path, "version");
  if (version != kCheckpointVersion) fail(ErrorCode::kFormat, path.string() + ": unsupported version");
  TripletModel model;
  auto& c = model.config;
  c.margin = read_le<double>(in, path, "config");
  c.output_dim = static_cast<int>(read_le<std::uint32_t>(in, path, "config"));
  c.hidden_dim = static_cast<int>(read_le<std::uint32_t>(in, path, "config"));
  c.dropout_rate = read_le<double>(in, path, "config");
  c.batch_size = read_le<std::uint64_t>(in, path, "config");
  c.learning_rate = read_le<double>(in, path, "config");
  c.epochs = static_cast<int>(read_le<std::uint32_t>(in, path, "config"));
  c.seed = read_le<std::uint64_t>(in, path, "config");
  c.alternating = read_le<std::uint8_t>(in, path, "config") != 0;
  c.anchor = read_le<std::uint8_t>(in, path, "config") != 0 ? AnchorModality::kText : AnchorModality::kImage;
  model.trained_epochs = static_cast<int>(read_le<std::uint32_t>(in, path, "config"));
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kFormat, path.string() + ": invalid config block (" + e.what() + ")");
  }
  model.image_tower = read_tower(in, path, c);
  model.text_tower = read_tower(in, path, c);
  if (in.peek() != std::char_traits<char>::eof()) fail(ErrorCode::kFormat, path.string() + ": trailing bytes");
  return model;
}

}  // namespace xmr
