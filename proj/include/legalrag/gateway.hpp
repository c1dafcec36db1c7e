#pragma once

// Clients for the external embedding and generation servers, plus the
// offline test doubles selected by `backend = deterministic-stub`.

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <semaphore>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "legalrag/embedding.hpp"
#include "legalrag/error.hpp"
#include "legalrag/utf8.hpp"

namespace legalrag {

struct GenerationRequest {
  std::string model;
  std::string prompt;
  double temperature = 0.0;
  int max_tokens = 1024;
};

struct GenerationResponse {
  std::string text;
  std::string model;
  double latency_ms = 0.0;
};

class Embedder {
public:
  virtual ~Embedder() = default;
  /// May return an unnormalized vector; the gateway normalizes.
  virtual EmbeddingVector embed(std::string_view text) = 0;
};

class Generator {
public:
  virtual ~Generator() = default;
  virtual GenerationResponse generate(const GenerationRequest& req) = 0;
};

class DeterministicEmbedder final : public Embedder {
public:
  explicit DeterministicEmbedder(std::size_t dim) : dim_(dim) {}
  EmbeddingVector embed(std::string_view text) override { return deterministic_embed(text, dim_); }

private:
  std::size_t dim_;
};

/// Canned-map generator. A prompt equal to a key gets that response; otherwise
/// the first key (in insertion order) contained in the prompt wins; otherwise
/// the default string.
class StubGenerator final : public Generator {
public:
  StubGenerator() = default;
  explicit StubGenerator(std::string default_response) : default_(std::move(default_response)) {}

  void add(std::string prompt, std::string response) {
    entries_.emplace_back(std::move(prompt), std::move(response));
  }

  const std::string& default_response() const { return default_; }

  GenerationResponse generate(const GenerationRequest& req) override {
    return {lookup(req.prompt), req.model, 0.0};
  }

  std::string lookup(std::string_view prompt) const {
    for (const auto& [key, value] : entries_)
      if (key == prompt) return value;
    for (const auto& [key, value] : entries_)
      if (!key.empty() && prompt.find(key) != std::string_view::npos) return value;
    return default_;
  }

  /// File format: JSON array of {"prompt": string, "response": string}.
  static StubGenerator from_file(const std::filesystem::path& path, std::string default_response) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open stub responses file: " + path.string());
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("stub responses file " + path.string() + ": " + e.what());
    }
    if (!doc.is_array()) throw ConfigError("stub responses file must hold a JSON array");
    StubGenerator stub(std::move(default_response));
    for (const auto& entry : doc) {
      if (!entry.is_object() || !entry.contains("prompt") || !entry.contains("response") ||
          !entry["prompt"].is_string() || !entry["response"].is_string())
        throw ConfigError("stub responses entries need string fields prompt and response");
      stub.add(entry["prompt"].get<std::string>(), entry["response"].get<std::string>());
    }
    return stub;
  }

private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::string default_ = "No canned response.";
};

/// 3 attempts, exponential backoff from 250 ms; only retryable errors repeat.
struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{250};
  std::function<void(std::chrono::milliseconds)> sleep =
      [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
};

template <class Attempt>
auto with_retries(const RetryPolicy& policy, Attempt&& attempt) {
  auto delay = policy.initial_backoff;
  for (int i = 1;; ++i) {
    try {
      return attempt();
    } catch (const GatewayError& e) {
      if (!e.retryable() || i >= policy.max_attempts) throw;
    }
    policy.sleep(delay);
    delay *= 2;
  }
}

/// HTTP client for an Ollama-compatible server.
class RemoteBackend final : public Embedder, public Generator {
public:
  struct Options {
    std::string base_url = "http://127.0.0.1:11434";
    std::string embedding_model = "all-minilm";
    double timeout_s = 120.0;
    RetryPolicy retry;
  };

  explicit RemoteBackend(Options opts) : opts_(std::move(opts)) {}

  EmbeddingVector embed(std::string_view text) override {
    nlohmann::json body = {{"model", opts_.embedding_model}, {"prompt", std::string(text)}};
    auto reply = post("/api/embeddings", body.dump());
    if (!reply.contains("embedding") || !reply["embedding"].is_array())
      throw ProtocolError("embedding response lacks an \"embedding\" array");
    EmbeddingVector v;
    for (const auto& x : reply["embedding"]) {
      if (!x.is_number()) throw ProtocolError("embedding contains a non-numeric component");
      v.values.push_back(x.get<float>());
    }
    return v;
  }

  GenerationResponse generate(const GenerationRequest& req) override {
    nlohmann::json body = {
        {"model", req.model},
        {"prompt", req.prompt},
        {"stream", false},
        {"options", {{"temperature", req.temperature}, {"num_predict", req.max_tokens}}}};
    auto reply = post("/api/generate", body.dump());
    if (!reply.contains("response") || !reply["response"].is_string())
      throw ProtocolError("generation response lacks a \"response\" string");
    GenerationResponse out;
    out.text = reply["response"].get<std::string>();
    out.model = reply.contains("model") && reply["model"].is_string()
                    ? reply["model"].get<std::string>()
                    : req.model;
    return out;
  }

private:
  nlohmann::json post(const std::string& path, const std::string& body) {
    return with_retries(opts_.retry, [&] {
      httplib::Client cli(opts_.base_url);
      const auto secs = std::chrono::duration_cast<std::chrono::microseconds>(
          std::chrono::duration<double>(opts_.timeout_s));
      cli.set_connection_timeout(secs);
      cli.set_read_timeout(secs);
      cli.set_write_timeout(secs);
      auto res = cli.Post(path, body, "application/json");
      if (!res)
        throw GatewayError(opts_.base_url + path + ": " + httplib::to_string(res.error()), true);
      if (res->status >= 500)
        throw GatewayError(opts_.base_url + path + ": HTTP " + std::to_string(res->status), true);
      if (res->status < 200 || res->status >= 300)
        throw GatewayError(opts_.base_url + path + ": HTTP " + std::to_string(res->status), false);
      try {
        auto parsed = nlohmann::json::parse(res->body);
        if (!parsed.is_object()) throw ProtocolError(path + ": response body is not an object");
        return parsed;
      } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(path + ": malformed response body: " + e.what());
      }
    });
  }

  Options opts_;
};

struct GatewayConfig {
  std::string backend = "remote";  // remote | deterministic-stub
  std::string base_url = "http://127.0.0.1:11434";
  std::string generation_model = "llama3.1:8b";
  std::string embedding_model = "all-minilm";
  std::size_t embedding_dim = 384;
  double timeout_s = 120.0;
  std::size_t max_inflight = 4;
  std::string stub_responses;  // optional JSON file for the stub generator
  std::string stub_default = "No canned response.";
};

/// Shareable front door: validates requests, normalizes embeddings, bounds
/// in-flight generations, and measures latency.
class Gateway {
public:
  Gateway(std::shared_ptr<Embedder> embedder, std::shared_ptr<Generator> generator,
          std::size_t embedding_dim, std::string backend_name,
          std::string generation_model, std::size_t max_inflight = 4)
      : embedder_(std::move(embedder)),
        generator_(std::move(generator)),
        dim_(embedding_dim),
        backend_(std::move(backend_name)),
        generation_model_(std::move(generation_model)),
        inflight_(std::make_unique<std::counting_semaphore<>>(
            static_cast<std::ptrdiff_t>(max_inflight == 0 ? 1 : max_inflight))) {
    if (dim_ == 0) throw ConfigError("embedding dimension must be positive");
  }

  std::size_t embedding_dim() const { return dim_; }
  const std::string& backend_name() const { return backend_; }
  const std::string& generation_model() const { return generation_model_; }

  EmbeddingVector embed_text(std::string_view text) const {
    if (utf8::trim(text).empty()) throw ContractError("embed_text requires non-empty text");
    auto v = embedder_->embed(text);
    if (v.dim() != dim_)
      throw ConfigError("embedding dimension " + std::to_string(v.dim()) +
                        " does not match configured " + std::to_string(dim_));
    if (!all_finite(v.values)) throw ProtocolError("embedding has non-finite components");
    if (v.normalized && is_unit(v.values)) return v;
    std::vector<double> raw(v.values.begin(), v.values.end());
    try {
      return normalize(raw);
    } catch (const ContractError&) {
      throw ProtocolError("embedding server returned a zero vector");
    }
  }

  GenerationResponse generate(GenerationRequest req) const {
    if (req.prompt.empty()) throw ContractError("generation prompt must be non-empty");
    if (req.model.empty()) req.model = generation_model_;
    inflight_->acquire();
    struct Release {
      std::counting_semaphore<>* s;
      ~Release() { s->release(); }
    } release{inflight_.get()};
    const auto t0 = std::chrono::steady_clock::now();
    auto res = generator_->generate(req);
    res.latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (res.model.empty()) res.model = req.model;
    return res;
  }

  GenerationResponse generate(std::string prompt) const {
    GenerationRequest req;
    req.model = generation_model_;
    req.prompt = std::move(prompt);
    return generate(std::move(req));
  }

private:
  std::shared_ptr<Embedder> embedder_;
  std::shared_ptr<Generator> generator_;
  std::size_t dim_;
  std::string backend_;
  std::string generation_model_;
  std::unique_ptr<std::counting_semaphore<>> inflight_;
};

inline std::shared_ptr<Gateway> make_gateway(const GatewayConfig& cfg) {
  if (cfg.backend == "deterministic-stub") {
    auto stub = cfg.stub_responses.empty()
                    ? StubGenerator(cfg.stub_default)
                    : StubGenerator::from_file(cfg.stub_responses, cfg.stub_default);
    return std::make_shared<Gateway>(std::make_shared<DeterministicEmbedder>(cfg.embedding_dim),
                                     std::make_shared<StubGenerator>(std::move(stub)),
                                     cfg.embedding_dim, cfg.backend, cfg.generation_model,
                                     cfg.max_inflight);
  }
  if (cfg.backend == "remote") {
    RemoteBackend::Options opts;
    opts.base_url = cfg.base_url;
    opts.embedding_model = cfg.embedding_model;
    opts.timeout_s = cfg.timeout_s;
    auto remote = std::make_shared<RemoteBackend>(std::move(opts));
    return std::make_shared<Gateway>(remote, remote, cfg.embedding_dim, cfg.backend,
                                     cfg.generation_model, cfg.max_inflight);
  }
  throw ConfigError("unknown gateway backend: " + cfg.backend);
}

} // namespace legalrag
