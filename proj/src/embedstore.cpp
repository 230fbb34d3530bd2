#include "xmr/embedstore.hpp"

#include "xmr/detail/binary_io.hpp"
#include "xmr/knn.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace xmr {

using detail::from_le;
using detail::read_le;
using detail::write_le;

namespace {

constexpr std::array<char, 4> kMagic = {'E', 'M', 'B', '1'};

std::string_view trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

}  // namespace

EmbeddingFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return (ext == ".tsv" || ext == ".txt") ? EmbeddingFormat::kTsv : EmbeddingFormat::kBinary;
}

EmbeddingSet::EmbeddingSet(std::vector<std::string> ids, RowMatrixXf matrix)
    : ids_(std::move(ids)), matrix_(std::move(matrix)) {
  if (static_cast<Eigen::Index>(ids_.size()) != matrix_.rows()) {
    fail(ErrorCode::kDimensionMismatch,
         std::to_string(ids_.size()) + " ids for " + std::to_string(matrix_.rows()) + " rows");
  }
  if (matrix_.cols() <= 0) fail(ErrorCode::kDimensionMismatch, "embedding dim must be positive");
  index_.reserve(ids_.size());
  squared_norms_.resize(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) {
      fail(ErrorCode::kDuplicateId, "row " + std::to_string(i) + " repeats id '" + ids_[i] + "'");
    }
    const auto r = matrix_.row(static_cast<Eigen::Index>(i));
    if (!r.allFinite()) fail(ErrorCode::kNonFinite, "row " + std::to_string(i) + " ('" + ids_[i] + "')");
    const double sq = squared_norm64(r);
    if (!(sq > 0.0)) fail(ErrorCode::kZeroNorm, "row " + std::to_string(i) + " ('" + ids_[i] + "')");
    squared_norms_[i] = sq;
  }
}

std::optional<std::size_t> EmbeddingSet::index_of(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t EmbeddingSet::require_index(const std::string& id) const {
  const auto idx = index_of(id);
  if (!idx) fail(ErrorCode::kUnknownId, "'" + id + "'");
  return *idx;
}

EmbeddingSet EmbeddingSet::subset(std::span<const std::size_t> rows) const {
  std::vector<std::string> ids;
  ids.reserve(rows.size());
  RowMatrixXf m(static_cast<Eigen::Index>(rows.size()), matrix_.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ids.push_back(ids_[rows[i]]);
    m.row(static_cast<Eigen::Index>(i)) = matrix_.row(static_cast<Eigen::Index>(rows[i]));
  }
  return EmbeddingSet(std::move(ids), std::move(m));
}

std::size_t binary_file_size(const std::vector<std::string>& ids, int dim) {
  std::size_t bytes = kMagic.size() + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  for (const auto& id : ids) bytes += sizeof(std::uint16_t) + id.size();
  return bytes + ids.size() * static_cast<std::size_t>(dim) * sizeof(float);
}

namespace {

EmbeddingSet load_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) fail(ErrorCode::kFormat, path.string() + ": bad magic, expected EMB1");
  const auto dim = read_le<std::uint32_t>(in, path, "header");
  const auto count = read_le<std::uint64_t>(in, path, "header");
  if (dim == 0) fail(ErrorCode::kFormat, path.string() + ": dim is zero");

  std::vector<std::string> ids(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = read_le<std::uint16_t>(in, path, "id length");
    ids[i].resize(len);
    in.read(ids[i].data(), len);
    if (!in) fail(ErrorCode::kFormat, path.string() + ": truncated id at row " + std::to_string(i));
  }
  RowMatrixXf m(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(count * dim * sizeof(float)));
  if (!in) fail(ErrorCode::kFormat, path.string() + ": truncated matrix block");
  if constexpr (std::endian::native == std::endian::big) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = from_le(m.data()[i]);
  }
  if (in.peek() != std::char_traits<char>::eof()) fail(ErrorCode::kFormat, path.string() + ": trailing bytes");
  return EmbeddingSet(std::move(ids), std::move(m));
}

EmbeddingSet load_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::string> ids;
  std::vector<float> values;
  long dim = -1;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    const std::string_view text = trim_cr(line);
    if (text.empty()) continue;
    const auto tab = text.find('\t');
    const auto where = path.string() + ": row " + std::to_string(row);
    if (tab == std::string_view::npos) fail(ErrorCode::kFormat, where + " has no TAB separator");
    ids.emplace_back(text.substr(0, tab));
    std::string_view rest = text.substr(tab + 1);
    long n = 0;
    while (true) {
      const auto comma = rest.find(',');
      const auto field = rest.substr(0, comma);
      float v = 0.0f;
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
        fail(ErrorCode::kFormat, where + ": bad number '" + std::string(field) + "'");
      }
      values.push_back(v);
      ++n;
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (dim < 0) dim = n;
    if (n != dim) {
      fail(ErrorCode::kDimensionMismatch, where + " has " + std::to_string(n) + " values, expected " + std::to_string(dim));
    }
    ++row;
  }
  if (dim < 0) fail(ErrorCode::kFormat, path.string() + ": empty TSV has no dimension");
  RowMatrixXf m = Eigen::Map<RowMatrixXf>(values.data(), static_cast<Eigen::Index>(ids.size()), dim);
  return EmbeddingSet(std::move(ids), std::move(m));
}

}  // namespace

EmbeddingSet load_embeddings(const std::filesystem::path& path, EmbeddingFormat format) {
  return format == EmbeddingFormat::kBinary ? load_binary(path) : load_tsv(path);
}

void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path, EmbeddingFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  if (format == EmbeddingFormat::kBinary) {
    out.write(kMagic.data(), kMagic.size());
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(set.dim()));
    write_le<std::uint64_t>(out, set.size());
    for (const auto& id : set.ids()) {
      if (id.size() > 0xFFFF) fail(ErrorCode::kFormat, "id longer than 65535 bytes: " + id.substr(0, 32) + "...");
      write_le<std::uint16_t>(out, static_cast<std::uint16_t>(id.size()));
      out.write(id.data(), static_cast<std::streamsize>(id.size()));
    }
    if constexpr (std::endian::native == std::endian::little) {
      out.write(reinterpret_cast<const char*>(set.matrix().data()),
                static_cast<std::streamsize>(set.matrix().size() * sizeof(float)));
    } else {
      for (Eigen::Index i = 0; i < set.matrix().size(); ++i) write_le(out, set.matrix().data()[i]);
    }
  } else {
    char buf[32];
    for (std::size_t i = 0; i < set.size(); ++i) {
      out << set.id(i) << '\t';
      for (int j = 0; j < set.dim(); ++j) {
        std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(set.matrix()(static_cast<Eigen::Index>(i), j)));
        if (j) out << ',';
        out << buf;
      }
      out << '\n';
    }
  }
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

std::vector<IdPair> load_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<IdPair> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view text = trim_cr(line);
    if (text.empty() || text.front() == '#') continue;
    const auto tab = text.find('\t');
    if (tab == std::string_view::npos || text.find('\t', tab + 1) != std::string_view::npos) {
      fail(ErrorCode::kFormat, path.string() + ":" + std::to_string(lineno) + ": expected image_id<TAB>text_id");
    }
    pairs.emplace_back(std::string(text.substr(0, tab)), std::string(text.substr(tab + 1)));
  }
  return pairs;
}

void save_pairs(std::span<const IdPair> pairs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out << "# image_id\ttext_id\n";
  for (const auto& [image, text] : pairs) out << image << '\t' << text << '\n';
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

std::vector<IdPair> PairedCorpus::pairs() const {
  std::vector<IdPair> out;
  out.reserve(images_.size());
  for (std::size_t i = 0; i < images_.size(); ++i) out.emplace_back(images_.id(i), texts_.id(image_to_text_[i]));
  return out;
}

PairedCorpus join_corpus(EmbeddingSet images, EmbeddingSet texts, std::span<const IdPair> pairs) {
  constexpr auto kUnset = static_cast<std::size_t>(-1);
  PairedCorpus c;
  c.image_to_text_.assign(images.size(), kUnset);
  for (const auto& [image_id, text_id] : pairs) {
    const auto img = images.index_of(image_id);
    if (!img) fail(ErrorCode::kUnknownId, "image '" + image_id + "'");
    const auto txt = texts.index_of(text_id);
    if (!txt) fail(ErrorCode::kUnknownId, "text '" + text_id + "'");
    auto& slot = c.image_to_text_[*img];
    if (slot != kUnset && slot != *txt) {
      fail(ErrorCode::kDuplicateImagePairing,
           "image '" + image_id + "' paired to '" + texts.id(slot) + "' and '" + text_id + "'");
    }
    slot = *txt;
  }
  c.text_to_images_.resize(texts.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (c.image_to_text_[i] == kUnset) fail(ErrorCode::kUnpairedImage, "image '" + images.id(i) + "' has no text");
    c.text_to_images_[c.image_to_text_[i]].push_back(i);
  }
  for (std::size_t t = 0; t < texts.size(); ++t) {
    if (!c.text_to_images_[t].empty()) c.paired_texts_.push_back(t);
  }
  c.images_ = std::move(images);
  c.texts_ = std::move(texts);
  return c;
}

}  // namespace xmr
