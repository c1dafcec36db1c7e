#pragma once

#include <memory>
#include <string>

#include "legalrag/config.hpp"
#include "legalrag/ingest.hpp"
#include "legalrag/rag_engine.hpp"
#include "legalrag/vector_index.hpp"
#include "test_support.hpp"

namespace legalrag::test {

inline const std::string kGoldenQuestion = "Who is a consumer under the Consumer Protection Act, 2019?";
inline const std::string kUnrelatedQuestion = "Recipe for chocolate cake";

inline Config stub_config() {
  Config c;
  c.load_file(test_data() / "stub.toml");
  return c;
}

/// The sample corpus indexed in-process with the offline stub backend.
inline std::shared_ptr<const VectorIndex> sample_index(const Gateway& gw) {
  const auto chunks = chunk_corpus(load_corpus(sample_corpus()).documents, ChunkingParams{});
  return std::make_shared<const VectorIndex>(
      build_index(chunks, [&](std::string_view t) { return gw.embed_text(t); }, gw.embedding_dim()));
}

inline std::shared_ptr<const RagEngine> sample_engine(std::shared_ptr<const Gateway> gw = nullptr) {
  const auto cfg = stub_config();
  if (!gw) gw = make_gateway(cfg.gateway());
  return std::make_shared<const RagEngine>(sample_index(*gw), gw, cfg.engine());
}

} // namespace legalrag::test
