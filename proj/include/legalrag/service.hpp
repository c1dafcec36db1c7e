#pragma once

// JSON-over-HTTP facade:
//   POST /v1/query    {"question": string}
//   GET  /v1/health
//   GET  /v1/sources

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "legalrag/config.hpp"
#include "legalrag/error.hpp"
#include "legalrag/rag_engine.hpp"
#include "legalrag/utf8.hpp"
#include "legalrag/version.hpp"

namespace legalrag {

inline constexpr std::size_t kMaxQuestionChars = 4000;
inline constexpr std::size_t kMaxRequestBytes = 16 * 1024;

struct Reply {
  int status = 200;
  std::string body;
};

class Service {
public:
  /// `engine` may be null: health and sources then answer 503.
  explicit Service(std::shared_ptr<const RagEngine> engine, std::vector<std::string> cors_origins = {})
      : engine_(std::move(engine)), cors_origins_(std::move(cors_origins)) {}

  Reply handle_query(std::string_view body) const {
    if (body.size() > kMaxRequestBytes) return client_error(413, "request body exceeds 16 KiB");
    std::string question;
    try {
      auto j = nlohmann::json::parse(body);
      if (!j.is_object() || !j.contains("question") || !j["question"].is_string())
        return client_error(400, "body must be {\"question\": string}");
      question = j["question"].get<std::string>();
    } catch (const nlohmann::json::exception&) {
      return client_error(400, "body is not valid JSON");
    }
    if (utf8::trim(question).empty()) return client_error(400, "question must be non-empty");
    if (utf8::length(question) > kMaxQuestionChars)
      return client_error(400, "question exceeds 4000 characters");
    if (!engine_) return server_error(503, "index_not_loaded");

    const auto t0 = std::chrono::steady_clock::now();
    GroundedAnswer answer;
    try {
      answer = engine_->answer(question);
    } catch (const GatewayError&) {
      return server_error(503, "generation_unavailable");
    } catch (const std::exception&) {
      return server_error(500, "internal");
    }
    const double latency =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return {200, query_response_json(answer, latency).dump()};
  }

  Reply handle_health() const {
    if (!engine_) return server_error(503, "index_not_loaded");
    nlohmann::ordered_json j;
    j["index_count"] = engine_->index().count();
    j["dim"] = engine_->index().dim();
    j["gateway_backend"] = engine_->gateway().backend_name();
    j["version"] = kVersion;
    return {200, j.dump()};
  }

  Reply handle_sources() const {
    if (!engine_) return server_error(503, "index_not_loaded");
    std::map<std::string, std::size_t> counts;
    for (const auto& m : engine_->index().metadata()) ++counts[m.doc_id];
    auto arr = nlohmann::ordered_json::array();
    for (const auto& [doc, n] : counts) {
      nlohmann::ordered_json e;
      e["doc_id"] = doc;
      e["chunk_count"] = n;
      arr.push_back(std::move(e));
    }
    return {200, arr.dump()};
  }

  /// {answer, grounded, contexts[{text, score, doc_id, chunk_id}], latency_ms}
  static nlohmann::ordered_json query_response_json(const GroundedAnswer& a, double latency_ms) {
    nlohmann::ordered_json j;
    j["answer"] = a.text;
    j["grounded"] = a.grounded;
    auto ctx = nlohmann::ordered_json::array();
    if (a.grounded) {
      for (const auto& h : a.contexts) {
        nlohmann::ordered_json c;
        c["text"] = h.chunk.text;
        c["score"] = h.score;
        c["doc_id"] = h.chunk.doc_id;
        c["chunk_id"] = h.chunk.chunk_id;
        ctx.push_back(std::move(c));
      }
    }
    j["contexts"] = std::move(ctx);
    j["latency_ms"] = latency_ms;
    return j;
  }

  bool origin_allowed(std::string_view origin) const {
    for (const auto& allowed : cors_origins_) {
      if (allowed == "*" || origin == allowed) return true;
      if (origin.size() > allowed.size() && origin.starts_with(allowed) &&
          origin[allowed.size()] == ':')
        return true;
    }
    return false;
  }

  /// Registers routes, CORS handling, the request size cap and (if `log` is
  /// set) one structured log line per request.
  void mount(httplib::Server& server, std::ostream* log = nullptr) const {
    server.set_payload_max_length(kMaxRequestBytes);
    server.Post("/v1/query", [this](const httplib::Request& req, httplib::Response& res) {
      send(res, handle_query(req.body));
    });
    server.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      send(res, handle_health());
    });
    server.Get("/v1/sources", [this](const httplib::Request&, httplib::Response& res) {
      send(res, handle_sources());
    });
    server.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
    });
    server.set_post_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      const auto origin = req.get_header_value("Origin");
      if (!origin.empty() && origin_allowed(origin)) {
        res.set_header("Access-Control-Allow-Origin", origin);
        res.set_header("Vary", "Origin");
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
      }
    });
    if (log) {
      server.set_logger([this, log](const httplib::Request& req, const httplib::Response& res) {
        std::lock_guard lock(log_mutex_);
        *log << "INFO request method=" << req.method << " path=" << req.path
             << " status=" << res.status << " bytes=" << res.body.size() << std::endl;
      });
    }
  }

private:
  static void send(httplib::Response& res, const Reply& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  }

  static Reply client_error(int status, std::string_view message) {
    nlohmann::ordered_json j;
    j["error"] = "invalid_request";
    j["message"] = message;
    return {status, j.dump()};
  }

  /// Never carries internal exception text, only a code and a reference id.
  Reply server_error(int status, std::string_view code) const {
    nlohmann::ordered_json j;
    j["error"] = code;
    j["id"] = "err-" + std::to_string(++error_seq_);
    return {status, j.dump()};
  }

  std::shared_ptr<const RagEngine> engine_;
  std::vector<std::string> cors_origins_;
  mutable std::atomic<unsigned long> error_seq_{0};
  mutable std::mutex log_mutex_;
};

} // namespace legalrag
