#pragma once

// Flat vector store with exact cosine kNN search and a checksummed,
// little-endian file format:
//
//   "LAI1" | version u32 | dim u32 | count u64 | flags u32
//   count*dim float32, row-major
//   u64 metadata length | JSON lines {chunk_id, doc_id, char_start, char_end, text}
//   CRC32 u32 over everything above

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

#include <json.hpp>

#include "legalrag/embedding.hpp"
#include "legalrag/error.hpp"
#include "legalrag/ingest.hpp"

namespace legalrag {

static_assert(std::endian::native == std::endian::little,
              "index serialization assumes a little-endian host");

struct ChunkMeta {
  std::string chunk_id;
  std::string doc_id;
  std::size_t char_start = 0;
  std::size_t char_end = 0;
  std::string text;

  bool operator==(const ChunkMeta&) const = default;

  static ChunkMeta from(const Chunk& c) {
    return {c.chunk_id, c.doc_id, c.char_start, c.char_end, c.text};
  }
};

struct SearchHit {
  std::size_t row = 0;
  ChunkMeta chunk;
  double score = 0.0;
};

class VectorIndex {
public:
  static constexpr std::uint32_t kFormatVersion = 1;
  static constexpr std::uint32_t kFlagNormalized = 1u;

  explicit VectorIndex(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw ContractError("index dimension must be positive");
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t count() const noexcept { return meta_.size(); }
  bool empty() const noexcept { return meta_.empty(); }

  std::span<const float> row(std::size_t i) const {
    return {vectors_.data() + i * dim_, dim_};
  }
  const ChunkMeta& meta(std::size_t i) const { return meta_.at(i); }
  const std::vector<ChunkMeta>& metadata() const noexcept { return meta_; }
  std::span<const float> vectors() const noexcept { return vectors_; }

  void add(std::span<const float> vec, ChunkMeta meta) {
    if (vec.size() != dim_)
      throw ContractError("vector dimension " + std::to_string(vec.size()) +
                          " does not match index dimension " + std::to_string(dim_));
    if (!all_finite(vec) || !is_unit(vec))
      throw ContractError("index rows must be finite and L2-normalized (" + meta.chunk_id + ")");
    vectors_.insert(vectors_.end(), vec.begin(), vec.end());
    meta_.push_back(std::move(meta));
  }

  /// Exact top-k by dot product; ties resolved by ascending row.
  std::vector<SearchHit> search(const EmbeddingVector& query, std::size_t k) const {
    if (k == 0) throw ContractError("search requires k >= 1");
    if (query.dim() != dim_)
      throw ContractError("query dimension " + std::to_string(query.dim()) +
                          " does not match index dimension " + std::to_string(dim_));
    if (!is_unit(query.values)) throw ContractError("query vector must be normalized");

    struct Scored {
      double score;
      std::size_t row;
    };
    std::vector<Scored> scored(count());
    for (std::size_t i = 0; i < count(); ++i) scored[i] = {dot(query.values, row(i)), i};
    const auto better = [](const Scored& a, const Scored& b) {
      return a.score != b.score ? a.score > b.score : a.row < b.row;
    };
    const std::size_t n = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n),
                      scored.end(), better);

    std::vector<SearchHit> hits;
    hits.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      hits.push_back({scored[i].row, meta_[scored[i].row], scored[i].score});
    return hits;
  }

  bool operator==(const VectorIndex&) const = default;

private:
  std::size_t dim_;
  std::vector<float> vectors_;
  std::vector<ChunkMeta> meta_;
};

/// Embeds every chunk in order. Any embedder failure aborts the build and
/// names the failing chunk; no partial index escapes.
inline VectorIndex build_index(const std::vector<Chunk>& chunks,
                               const std::function<EmbeddingVector(std::string_view)>& embedder,
                               std::size_t dim) {
  VectorIndex index(dim);
  for (const auto& c : chunks) {
    if (c.text.empty()) throw ContractError("chunk " + c.chunk_id + " is empty");
    EmbeddingVector v;
    try {
      v = embedder(c.text);
    } catch (const Error& e) {
      throw Error("embedding failed for chunk " + c.chunk_id + ": " + e.what());
    }
    if (v.dim() != dim)
      throw ConfigError("embedder returned dimension " + std::to_string(v.dim()) + " for chunk " +
                        c.chunk_id + ", expected " + std::to_string(dim));
    index.add(v.values, ChunkMeta::from(c));
  }
  return index;
}

namespace detail {

template <class T>
void put_le(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T get_le(std::string_view in, std::size_t pos) {
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  return value;
}

inline std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), n);
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

inline constexpr std::size_t kHeaderSize = 4 + 4 + 4 + 8 + 4;

} // namespace detail

inline std::string serialize_index(const VectorIndex& index) {
  std::string out;
  out.append("LAI1");
  detail::put_le<std::uint32_t>(out, VectorIndex::kFormatVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(index.dim()));
  detail::put_le<std::uint64_t>(out, index.count());
  detail::put_le<std::uint32_t>(out, VectorIndex::kFlagNormalized);
  const auto vecs = index.vectors();
  out.append(reinterpret_cast<const char*>(vecs.data()), vecs.size_bytes());

  std::string meta;
  for (const auto& m : index.metadata()) {
    nlohmann::ordered_json line;
    line["chunk_id"] = m.chunk_id;
    line["doc_id"] = m.doc_id;
    line["char_start"] = m.char_start;
    line["char_end"] = m.char_end;
    line["text"] = m.text;
    meta += line.dump();
    meta += '\n';
  }
  detail::put_le<std::uint64_t>(out, meta.size());
  out += meta;
  detail::put_le<std::uint32_t>(out, detail::crc32_of(out));
  return out;
}

inline VectorIndex deserialize_index(std::string_view bytes) {
  using detail::get_le;
  if (bytes.size() >= 4 && bytes.substr(0, 4) != "LAI1") throw IndexLoadError("bad magic");
  if (bytes.size() < detail::kHeaderSize + 8 + 4) throw IndexLoadError("truncated file");
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != VectorIndex::kFormatVersion)
    throw IndexLoadError("unsupported version " + std::to_string(version));
  const auto dim = get_le<std::uint32_t>(bytes, 8);
  const auto count = get_le<std::uint64_t>(bytes, 12);
  const auto flags = get_le<std::uint32_t>(bytes, 20);
  if (dim == 0) throw IndexLoadError("malformed header: zero dimension");

  const std::size_t available = bytes.size() - detail::kHeaderSize;
  if (count > available / (static_cast<std::size_t>(dim) * sizeof(float)))
    throw IndexLoadError("truncated file");
  const std::size_t body_bytes = static_cast<std::size_t>(count) * dim * sizeof(float);
  std::size_t pos = detail::kHeaderSize + body_bytes;
  if (bytes.size() < pos + 8 + 4) throw IndexLoadError("truncated file");
  const auto meta_len = get_le<std::uint64_t>(bytes, pos);
  pos += 8;
  if (meta_len > bytes.size() - pos - 4) throw IndexLoadError("truncated file");
  const std::size_t end = pos + static_cast<std::size_t>(meta_len);
  if (bytes.size() != end + 4) throw IndexLoadError("trailing bytes after footer");

  const auto stored_crc = get_le<std::uint32_t>(bytes, end);
  if (stored_crc != detail::crc32_of(bytes.substr(0, end)))
    throw IndexLoadError("checksum mismatch");
  if ((flags & VectorIndex::kFlagNormalized) == 0)
    throw IndexLoadError("unsupported flags: vectors not normalized");

  std::vector<float> row(dim);
  VectorIndex index(dim);
  std::string_view meta = bytes.substr(pos, static_cast<std::size_t>(meta_len));
  std::size_t r = 0;
  while (!meta.empty()) {
    const auto nl = meta.find('\n');
    if (nl == std::string_view::npos) throw IndexLoadError("malformed metadata: unterminated line");
    if (r >= count) throw IndexLoadError("malformed metadata: more rows than vectors");
    ChunkMeta m;
    try {
      auto j = nlohmann::json::parse(meta.substr(0, nl));
      m.chunk_id = j.at("chunk_id").get<std::string>();
      m.doc_id = j.at("doc_id").get<std::string>();
      m.char_start = j.at("char_start").get<std::size_t>();
      m.char_end = j.at("char_end").get<std::size_t>();
      m.text = j.at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw IndexLoadError(std::string("malformed metadata: ") + e.what());
    }
    std::memcpy(row.data(), bytes.data() + detail::kHeaderSize + r * dim * sizeof(float),
                dim * sizeof(float));
    try {
      index.add(row, std::move(m));
    } catch (const ContractError& e) {
      throw IndexLoadError(std::string("invalid row: ") + e.what());
    }
    meta.remove_prefix(nl + 1);
    ++r;
  }
  if (r != count) throw IndexLoadError("malformed metadata: fewer rows than vectors");
  return index;
}

inline void save_index(const VectorIndex& index, const std::filesystem::path& path) {
  const auto bytes = serialize_index(index);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open index file for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing index file: " + path.string());
}

inline VectorIndex load_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IndexLoadError("cannot open index file: " + path.string());
  std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize_index(bytes);
}

} // namespace legalrag
