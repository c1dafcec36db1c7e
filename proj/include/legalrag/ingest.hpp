#pragma once

// Corpus loading, text normalization and fixed-window chunking.
//
// All offsets are in Unicode scalar values of the normalized text, never in
// bytes, so a chunk boundary can not split a code point.

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "legalrag/error.hpp"
#include "legalrag/utf8.hpp"

namespace legalrag {

struct Document {
  std::string doc_id;  // relative path, '/' separated
  std::filesystem::path source_path;
  std::string text;    // normalized, UTF-8
  std::size_t byte_len = 0;
  std::size_t char_len = 0;
};

struct Chunk {
  std::string chunk_id;  // "<doc_id>#<ordinal>"
  std::string doc_id;
  std::size_t char_start = 0;
  std::size_t char_end = 0;
  std::string text;

  bool operator==(const Chunk&) const = default;
};

struct ChunkingParams {
  std::size_t chunk_size = 1000;
  std::size_t overlap = 20;

  void validate() const {
    if (chunk_size == 0) throw ContractError("chunk_size must be positive");
    if (overlap >= chunk_size)
      throw ContractError("overlap must be smaller than chunk_size");
  }
};

struct LoadWarning {
  std::string path;
  std::string reason;
};

struct CorpusLoad {
  std::vector<Document> documents;
  std::vector<LoadWarning> warnings;
};

/// `WARN ingest skip path=<p> reason=<r>`
inline std::string format_warning(const LoadWarning& w) {
  return "WARN ingest skip path=" + w.path + " reason=" + w.reason;
}

/// CRLF/CR -> LF, drop C0 controls except LF and TAB, collapse 3+ LF to 2,
/// trim surrounding whitespace. Case, accents and punctuation are preserved.
inline std::string normalize_text(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  std::size_t newline_run = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    char c = raw[i];
    if (c == '\r') {
      if (i + 1 < raw.size() && raw[i + 1] == '\n') continue;
      c = '\n';
    }
    const auto u = static_cast<unsigned char>(c);
    if (u < 0x20 && c != '\n' && c != '\t') continue;
    if (c == '\n') {
      if (++newline_run > 2) continue;
    } else {
      newline_run = 0;
    }
    out.push_back(c);
  }
  return std::string(utf8::trim(out));
}

inline Document make_document(std::string doc_id, std::filesystem::path source,
                              std::string_view raw) {
  Document doc;
  doc.doc_id = std::move(doc_id);
  doc.source_path = std::move(source);
  doc.text = normalize_text(raw);
  doc.byte_len = doc.text.size();
  doc.char_len = utf8::length(doc.text);
  return doc;
}

/// Recursively loads every regular file whose extension is in
/// `include_extensions`, in lexicographic order of the relative path.
/// Unreadable or non-UTF-8 files are skipped and reported as warnings.
inline CorpusLoad load_corpus(const std::filesystem::path& dir,
                              const std::set<std::string>& include_extensions = {".txt", ".md"}) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec))
    throw IngestError("corpus directory not found: " + dir.string());

  std::vector<std::pair<std::string, fs::path>> files;
  fs::recursive_directory_iterator it(dir, ec), end;
  if (ec) throw IngestError("cannot read corpus directory " + dir.string() + ": " + ec.message());
  for (; it != end; it.increment(ec)) {
    if (ec) throw IngestError("cannot traverse " + dir.string() + ": " + ec.message());
    std::error_code fec;
    if (!it->is_regular_file(fec)) continue;
    if (!include_extensions.contains(it->path().extension().string())) continue;
    files.emplace_back(fs::relative(it->path(), dir).generic_string(), it->path());
  }
  std::sort(files.begin(), files.end());

  CorpusLoad load;
  for (auto& [rel, path] : files) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
      load.warnings.push_back({path.string(), "unreadable"});
      continue;
    }
    std::string raw{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    if (in.bad()) {
      load.warnings.push_back({path.string(), "read-error"});
      continue;
    }
    if (!utf8::is_valid(raw)) {
      load.warnings.push_back({path.string(), "invalid-utf8"});
      continue;
    }
    if (raw.starts_with("\xEF\xBB\xBF")) raw.erase(0, 3);
    load.documents.push_back(make_document(rel, path, raw));
  }
  return load;
}

/// Windows of `chunk_size` characters at stride chunk_size - overlap. Stops
/// after the first window that reaches the end of the text.
inline std::vector<Chunk> chunk_document(const Document& doc, const ChunkingParams& params) {
  params.validate();
  std::vector<Chunk> chunks;
  const auto bounds = utf8::boundaries(doc.text);
  const std::size_t len = bounds.size() - 1;
  const std::size_t stride = params.chunk_size - params.overlap;
  for (std::size_t start = 0, ordinal = 0; start < len; start += stride, ++ordinal) {
    const std::size_t stop = std::min(start + params.chunk_size, len);
    Chunk c;
    c.chunk_id = doc.doc_id + "#" + std::to_string(ordinal);
    c.doc_id = doc.doc_id;
    c.char_start = start;
    c.char_end = stop;
    c.text = doc.text.substr(bounds[start], bounds[stop] - bounds[start]);
    chunks.push_back(std::move(c));
    if (stop == len) break;
  }
  return chunks;
}

inline std::vector<Chunk> chunk_corpus(const std::vector<Document>& docs,
                                       const ChunkingParams& params) {
  std::vector<Chunk> all;
  for (const auto& d : docs) {
    auto cs = chunk_document(d, params);
    std::move(cs.begin(), cs.end(), std::back_inserter(all));
  }
  return all;
}

} // namespace legalrag
