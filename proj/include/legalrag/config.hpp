#pragma once

// Layered configuration: defaults < file < LAI_* environment < flags.
//
// File format is a TOML subset:
//
//   [gateway]
//   backend = "deterministic-stub"
//   embedding_dim = 384

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "legalrag/error.hpp"
#include "legalrag/gateway.hpp"
#include "legalrag/ingest.hpp"
#include "legalrag/rag_engine.hpp"
#include "legalrag/utf8.hpp"

namespace legalrag {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::vector<std::string> cors_origins;
};

class Config {
public:
  Config() {
    values_ = {
        {"gateway.backend", "remote"},
        {"gateway.base_url", "http://127.0.0.1:11434"},
        {"gateway.generation_model", "llama3.1:8b"},
        {"gateway.embedding_model", "all-minilm"},
        {"gateway.embedding_dim", "384"},
        {"gateway.timeout_s", "120"},
        {"gateway.max_inflight", "4"},
        {"gateway.stub_responses", ""},
        {"gateway.stub_default", "No canned response."},
        {"rag.k", "4"},
        {"rag.similarity_floor", "0.25"},
        {"rag.prompt_budget_chars", "12000"},
        {"rag.template_path", ""},
        {"ingest.chunk_size", "1000"},
        {"ingest.overlap", "20"},
        {"ingest.extensions", ".txt,.md"},
        {"service.bind_addr", "127.0.0.1:8080"},
        {"service.cors_origins", "http://localhost,http://127.0.0.1"},
    };
  }

  bool known(const std::string& key) const { return values_.contains(key); }

  void set(const std::string& key, std::string value) {
    if (!known(key)) throw ConfigError("unknown config key: " + key);
    values_[key] = std::move(value);
  }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key: " + key);
    return it->second;
  }

  long long get_int(const std::string& key) const {
    const auto& v = get(key);
    try {
      std::size_t used = 0;
      const long long n = std::stoll(v, &used);
      if (used == v.size()) return n;
    } catch (const std::logic_error&) {
    }
    throw ConfigError(key + ": expected an integer, got \"" + v + "\"");
  }

  std::size_t get_positive(const std::string& key) const {
    const auto n = get_int(key);
    if (n <= 0) throw ConfigError(key + ": must be positive");
    return static_cast<std::size_t>(n);
  }

  double get_double(const std::string& key) const {
    const auto& v = get(key);
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used == v.size()) return d;
    } catch (const std::logic_error&) {
    }
    throw ConfigError(key + ": expected a number, got \"" + v + "\"");
  }

  std::vector<std::string> get_list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(get(key));
    for (std::string item; std::getline(ss, item, ',');) {
      std::string t(utf8::trim(item));
      if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
  }

  void load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::string section, line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
      const auto where = path.string() + ":" + std::to_string(lineno) + ": ";
      std::string_view t = utf8::trim(line);
      if (t.empty() || t.front() == '#') continue;
      if (t.front() == '[') {
        if (t.back() != ']') throw ConfigError(where + "malformed section header");
        section = std::string(utf8::trim(t.substr(1, t.size() - 2)));
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
      std::string key(utf8::trim(t.substr(0, eq)));
      if (!section.empty()) key = section + "." + key;
      if (!known(key)) throw ConfigError(where + "unknown config key: " + key);
      auto value = parse_value(utf8::trim(t.substr(eq + 1)), where);
      // File paths inside a config file are relative to that file.
      if ((key == "gateway.stub_responses" || key == "rag.template_path") && !value.empty() &&
          std::filesystem::path(value).is_relative())
        value = (path.parent_path() / value).string();
      values_[key] = std::move(value);
    }
  }

  /// LAI_GATEWAY_BASE_URL overrides gateway.base_url, and so on.
  void apply_env(const std::function<const char*(const char*)>& getenv_fn = [](const char* n) {
    return std::getenv(n);
  }) {
    for (auto& [key, value] : values_)
      if (const char* v = getenv_fn(env_name(key).c_str())) value = v;
  }

  static std::string env_name(std::string_view key) {
    std::string out = "LAI_";
    for (char c : key)
      out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
  }

  /// One "key = value" line per setting, sorted by key.
  std::string show() const {
    std::string out;
    for (const auto& [key, value] : values_) out += key + " = " + quote(value) + "\n";
    return out;
  }

  GatewayConfig gateway() const {
    GatewayConfig g;
    g.backend = get("gateway.backend");
    if (g.backend != "remote" && g.backend != "deterministic-stub")
      throw ConfigError("gateway.backend must be remote or deterministic-stub");
    g.base_url = get("gateway.base_url");
    g.generation_model = get("gateway.generation_model");
    g.embedding_model = get("gateway.embedding_model");
    g.embedding_dim = get_positive("gateway.embedding_dim");
    g.timeout_s = get_double("gateway.timeout_s");
    if (!(g.timeout_s > 0)) throw ConfigError("gateway.timeout_s must be positive");
    g.max_inflight = get_positive("gateway.max_inflight");
    g.stub_responses = get("gateway.stub_responses");
    g.stub_default = get("gateway.stub_default");
    return g;
  }

  EngineOptions engine() const {
    EngineOptions o;
    o.retrieval.k = get_positive("rag.k");
    o.retrieval.similarity_floor = get_double("rag.similarity_floor");
    if (!(o.retrieval.similarity_floor >= -1.0 && o.retrieval.similarity_floor <= 1.0))
      throw ConfigError("rag.similarity_floor must lie in [-1, 1]");
    o.prompt_budget_chars = get_positive("rag.prompt_budget_chars");
    if (const auto& tp = get("rag.template_path"); !tp.empty())
      o.prompt_template = PromptTemplate::from_file(tp);
    return o;
  }

  ChunkingParams chunking() const {
    ChunkingParams p;
    p.chunk_size = get_positive("ingest.chunk_size");
    const auto overlap = get_int("ingest.overlap");
    if (overlap < 0) throw ConfigError("ingest.overlap must be non-negative");
    p.overlap = static_cast<std::size_t>(overlap);
    if (p.overlap >= p.chunk_size) throw ConfigError("ingest.overlap must be smaller than ingest.chunk_size");
    return p;
  }

  std::set<std::string> extensions() const {
    auto list = get_list("ingest.extensions");
    return {list.begin(), list.end()};
  }

  ServiceOptions service() const {
    ServiceOptions s;
    const auto& bind = get("service.bind_addr");
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos || colon == 0)
      throw ConfigError("service.bind_addr must be host:port");
    s.host = bind.substr(0, colon);
    try {
      std::size_t used = 0;
      const auto port_str = bind.substr(colon + 1);
      s.port = std::stoi(port_str, &used);
      if (used != port_str.size() || s.port < 0 || s.port > 65535) throw std::out_of_range("port");
    } catch (const std::logic_error&) {
      throw ConfigError("service.bind_addr has an invalid port: " + bind);
    }
    s.cors_origins = get_list("service.cors_origins");
    return s;
  }

private:
  static std::string parse_value(std::string_view v, const std::string& where) {
    if (v.empty()) return {};
    if (v.front() != '"') {
      const auto hash = v.find(" #");
      return std::string(utf8::trim(v.substr(0, hash)));
    }
    std::string out;
    std::size_t i = 1;
    for (; i < v.size() && v[i] != '"'; ++i) {
      if (v[i] == '\\' && i + 1 < v.size()) {
        const char e = v[++i];
        out += e == 'n' ? '\n' : e == 't' ? '\t' : e;
      } else {
        out += v[i];
      }
    }
    if (i >= v.size()) throw ConfigError(where + "unterminated string");
    const auto rest = utf8::trim(v.substr(i + 1));
    if (!rest.empty() && rest.front() != '#') throw ConfigError(where + "trailing characters after value");
    return out;
  }

  static std::string quote(const std::string& v) {
    std::string out = "\"";
    for (char c : v) {
      if (c == '"' || c == '\\') out += '\\';
      if (c == '\n') {
        out += "\\n";
        continue;
      }
      out += c;
    }
    return out + "\"";
  }

  std::map<std::string, std::string> values_;
};

} // namespace legalrag
