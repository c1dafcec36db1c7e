#pragma once

// Retrieve -> guardrail -> construct prompt -> generate.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "legalrag/error.hpp"
#include "legalrag/gateway.hpp"
#include "legalrag/utf8.hpp"
#include "legalrag/vector_index.hpp"

namespace legalrag {

inline constexpr std::string_view kRefusal =
    "I don't know. The retrieved context does not contain relevant information.";

struct RetrievalParams {
  std::size_t k = 4;
  double similarity_floor = 0.25;

  void validate() const {
    if (k == 0) throw ContractError("k must be at least 1");
    if (!(similarity_floor >= -1.0 && similarity_floor <= 1.0))
      throw ContractError("similarity floor must lie in [-1, 1]");
  }
};

struct ContextSet {
  std::vector<SearchHit> hits;
  std::vector<SearchHit> effective;  // hits with score >= floor, same order
};

inline ContextSet apply_floor(std::vector<SearchHit> hits, double floor) {
  ContextSet c;
  c.hits = std::move(hits);
  for (const auto& h : c.hits)
    if (h.score >= floor) c.effective.push_back(h);
  return c;
}

inline bool is_context_empty(const ContextSet& c) { return c.effective.empty(); }

struct PromptTemplate {
  std::string persona = "You are a legal expert assistant specializing in Indian law.";
  std::string legal_constraint =
      "Answer using only the provided context. Be factually accurate, objective, and safe. "
      "Do not speculate. If the context does not contain the answer, say you do not know. "
      "You provide legal information, not legal advice.";
  std::string signifier = "Answer:";

  /// Sections "[persona]", "[legal_constraint]", "[signifier]"; each body is
  /// trimmed. Missing sections keep their defaults.
  static PromptTemplate from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open template file: " + path.string());
    PromptTemplate t;
    std::map<std::string, std::string> sections;
    std::string current, line;
    while (std::getline(in, line)) {
      auto trimmed = utf8::trim(line);
      if (trimmed.size() > 2 && trimmed.front() == '[' && trimmed.back() == ']') {
        current = std::string(trimmed.substr(1, trimmed.size() - 2));
        if (current != "persona" && current != "legal_constraint" && current != "signifier")
          throw ConfigError("unknown template section [" + current + "]");
        sections[current];
        continue;
      }
      if (current.empty()) {
        if (!trimmed.empty()) throw ConfigError("template text outside a section");
        continue;
      }
      sections[current] += line;
      sections[current] += '\n';
    }
    for (auto& [name, body] : sections) {
      std::string value(utf8::trim(body));
      if (value.empty()) throw ConfigError("template section [" + name + "] is empty");
      if (name == "persona") t.persona = value;
      if (name == "legal_constraint") t.legal_constraint = value;
      if (name == "signifier") t.signifier = value;
    }
    return t;
  }
};

inline constexpr std::size_t kDefaultPromptBudget = 12000;

namespace detail {

inline std::string render_prompt(const PromptTemplate& t, std::string_view question,
                                 const std::vector<SearchHit>& blocks, std::size_t n) {
  std::string out;
  out += t.persona;
  out += '\n';
  out += t.legal_constraint;
  out += "\nContext:\n";
  for (std::size_t i = 0; i < n; ++i) {
    out += '[' + std::to_string(i + 1) + "] (source: " + blocks[i].chunk.doc_id + ") ";
    out += blocks[i].chunk.text;
    out += '\n';
  }
  out += "Question:\n";
  out += question;
  out += '\n';
  out += t.signifier;
  return out;
}

} // namespace detail

/// Renders the four-part prompt. Over budget, whole context blocks are dropped
/// from the low-score end; the top block always stays.
inline std::string construct_prompt(const PromptTemplate& t, std::string_view question,
                                    const ContextSet& c,
                                    std::size_t budget_chars = kDefaultPromptBudget) {
  if (is_context_empty(c))
    throw ContractError("construct_prompt called with an empty context; the guardrail must fire first");
  std::size_t n = c.effective.size();
  std::string prompt = detail::render_prompt(t, question, c.effective, n);
  while (n > 1 && utf8::length(prompt) > budget_chars)
    prompt = detail::render_prompt(t, question, c.effective, --n);
  return prompt;
}

struct GroundedAnswer {
  std::string text;
  bool grounded = false;
  std::vector<SearchHit> contexts;
  std::size_t prompt_chars = 0;
};

struct EngineOptions {
  RetrievalParams retrieval;
  PromptTemplate prompt_template;
  std::size_t prompt_budget_chars = kDefaultPromptBudget;
};

/// Immutable after construction; safe to share across threads.
class RagEngine {
public:
  RagEngine(std::shared_ptr<const VectorIndex> index, std::shared_ptr<const Gateway> gateway,
            EngineOptions options = {})
      : index_(std::move(index)), gateway_(std::move(gateway)), options_(std::move(options)) {
    if (!index_) throw ContractError("engine requires a loaded index");
    if (!gateway_) throw ContractError("engine requires a gateway");
    options_.retrieval.validate();
    if (gateway_->embedding_dim() != index_->dim())
      throw ConfigError("gateway embedding dimension " + std::to_string(gateway_->embedding_dim()) +
                        " does not match index dimension " + std::to_string(index_->dim()));
  }

  const VectorIndex& index() const { return *index_; }
  const Gateway& gateway() const { return *gateway_; }
  const EngineOptions& options() const { return options_; }

  ContextSet retrieve(std::string_view question) const {
    auto query = gateway_->embed_text(question);
    return apply_floor(index_->search(query, options_.retrieval.k),
                       options_.retrieval.similarity_floor);
  }

  GroundedAnswer answer(std::string_view question) const {
    auto contexts = retrieve(question);
    GroundedAnswer out;
    if (is_context_empty(contexts)) {
      out.text = kRefusal;
      return out;
    }
    auto prompt = construct_prompt(options_.prompt_template, question, contexts,
                                   options_.prompt_budget_chars);
    out.prompt_chars = utf8::length(prompt);
    out.text = gateway_->generate(std::move(prompt)).text;
    // A model that echoes the refusal verbatim is reported as a refusal.
    if (out.text == kRefusal) return out;
    out.grounded = true;
    out.contexts = std::move(contexts.effective);
    return out;
  }

private:
  std::shared_ptr<const VectorIndex> index_;
  std::shared_ptr<const Gateway> gateway_;
  EngineOptions options_;
};

} // namespace legalrag
