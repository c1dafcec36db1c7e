#pragma once

// `legalrag` command line: ingest, query, serve, eval {aibe,semantic,pei},
// config show. Exit codes: 0 success, 1 operational error, 2 guardrail
// refusal (query only).

#include <pthread.h>
#include <signal.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>

#include "legalrag/config.hpp"
#include "legalrag/error.hpp"
#include "legalrag/eval.hpp"
#include "legalrag/gateway.hpp"
#include "legalrag/ingest.hpp"
#include "legalrag/rag_engine.hpp"
#include "legalrag/service.hpp"
#include "legalrag/vector_index.hpp"
#include "legalrag/version.hpp"

namespace legalrag::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitRefused = 2;

struct Flags {
  std::string config_path;
  std::string index;
  std::string corpus;
  std::optional<long long> k;
  std::optional<double> tau;
  std::optional<long long> chunk_size;
  std::optional<long long> overlap;
  std::string backend;
  std::string bind;
  bool show_context = false;
  std::string out;
  bool verbose = false;

  std::string question;
  std::string dataset;
  std::string exclude;
  std::string models;
};

/// defaults < config file < LAI_* environment < flags
inline Config resolve_config(const Flags& f) {
  Config cfg;
  if (!f.config_path.empty()) cfg.load_file(f.config_path);
  cfg.apply_env();
  if (f.k) cfg.set("rag.k", std::to_string(*f.k));
  if (f.tau) cfg.set("rag.similarity_floor", format_fixed(*f.tau, 17));
  if (f.chunk_size) cfg.set("ingest.chunk_size", std::to_string(*f.chunk_size));
  if (f.overlap) cfg.set("ingest.overlap", std::to_string(*f.overlap));
  if (!f.backend.empty()) cfg.set("gateway.backend", f.backend);
  if (!f.bind.empty()) cfg.set("service.bind_addr", f.bind);
  return cfg;
}

inline std::shared_ptr<const RagEngine> make_engine(const Config& cfg, const std::string& index_path) {
  if (index_path.empty()) throw ConfigError("--index is required");
  auto index = std::make_shared<const VectorIndex>(load_index(index_path));
  std::shared_ptr<const Gateway> gateway = make_gateway(cfg.gateway());
  return std::make_shared<const RagEngine>(std::move(index), std::move(gateway), cfg.engine());
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << content;
  if (!out) throw Error("failed writing " + path);
}

inline int cmd_ingest(const Config& cfg, const Flags& f, std::ostream& out, std::ostream& err) {
  if (f.corpus.empty()) throw ConfigError("--corpus is required");
  if (f.index.empty()) throw ConfigError("--index is required");
  const auto params = cfg.chunking();
  auto load = load_corpus(f.corpus, cfg.extensions());
  for (const auto& w : load.warnings) err << format_warning(w) << '\n';
  const auto chunks = chunk_corpus(load.documents, params);
  auto gateway = make_gateway(cfg.gateway());
  const auto index = build_index(
      chunks, [&](std::string_view text) { return gateway->embed_text(text); },
      gateway->embedding_dim());
  save_index(index, f.index);
  out << "documents=" << load.documents.size() << " chunks=" << index.count()
      << " dim=" << index.dim() << '\n';
  return kExitOk;
}

inline int cmd_query(const Config& cfg, const Flags& f, std::ostream& out) {
  if (utf8::trim(f.question).empty()) throw ContractError("question must be non-empty");
  const auto engine = make_engine(cfg, f.index);
  const auto answer = engine->answer(f.question);
  out << answer.text << '\n';
  if (f.show_context && answer.grounded) {
    out << "--- context ---\n";
    for (std::size_t i = 0; i < answer.contexts.size(); ++i) {
      const auto& h = answer.contexts[i];
      out << '[' << i + 1 << "] score=" << format_fixed(h.score, 4) << " source=" << h.chunk.doc_id
          << " chunk=" << h.chunk.chunk_id << '\n'
          << h.chunk.text << '\n';
    }
  }
  return answer.grounded ? kExitOk : kExitRefused;
}

inline int cmd_eval_aibe(const Config& cfg, const Flags& f, std::ostream& out, std::ostream& err) {
  std::ifstream ds(f.dataset);
  if (!ds) throw DatasetError("cannot open dataset: " + f.dataset);
  const auto items = parse_mcq_jsonl(ds);
  std::set<std::string> exclusions;
  if (!f.exclude.empty()) {
    std::ifstream ex(f.exclude);
    if (!ex) throw DatasetError("cannot open exclusion list: " + f.exclude);
    exclusions = parse_exclusions(ex);
  }
  const auto engine = make_engine(cfg, f.index);
  const auto report = run_mcq_benchmark(items, *engine, exclusions, cfg.gateway().max_inflight);
  for (const auto& r : report.per_item)
    if (!r.error.empty()) err << "WARN eval item=" << r.id << " error=" << r.error << '\n';
  if (!f.out.empty()) write_file(f.out, to_json(report) + "\n");
  out << "accuracy=" << format_fixed(report.accuracy, 4) << " q_total=" << report.q_total
      << " q_correct=" << report.q_correct << " excluded=" << report.excluded
      << " unparseable=" << report.unparseable << '\n';
  return kExitOk;
}

inline int cmd_eval_semantic(const Config& cfg, const Flags& f, std::ostream& out, std::ostream& err) {
  std::ifstream ds(f.dataset);
  if (!ds) throw DatasetError("cannot open dataset: " + f.dataset);
  const auto pairs = parse_semantic_jsonl(ds);
  if (pairs.empty()) throw DatasetError("semantic dataset is empty");
  const auto engine = make_engine(cfg, f.index);
  const Gateway& gw = engine->gateway();
  const auto report = run_semantic_eval(
      pairs, *engine, [&](std::string_view tok) { return gw.embed_text(tok); },
      cfg.gateway().max_inflight);
  for (const auto& p : report.per_pair)
    if (!p.score) err << "WARN eval question=" << json_string(p.question) << " error=" << p.error << '\n';
  if (!f.out.empty()) write_file(f.out, histogram_csv(report));
  out << "mean=" << format_fixed(report.mean, 4) << " median=" << format_fixed(report.median, 4)
      << " scored=" << report.scored << " failed=" << report.failed << '\n';
  return kExitOk;
}

inline int cmd_eval_pei(const Flags& f, std::ostream& out) {
  std::ifstream in(f.models);
  if (!in) throw DatasetError("cannot open models CSV: " + f.models);
  const auto csv = pei_csv(parse_models_csv(in));
  if (!f.out.empty()) write_file(f.out, csv);
  out << csv;
  return kExitOk;
}

namespace detail {

/// Blocks SIGINT/SIGTERM for the calling thread (and threads it spawns)
/// for the scope's lifetime.
class SignalMask {
public:
  SignalMask() {
    sigemptyset(&set_);
    sigaddset(&set_, SIGINT);
    sigaddset(&set_, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set_, &old_);
  }
  ~SignalMask() { pthread_sigmask(SIG_SETMASK, &old_, nullptr); }
  SignalMask(const SignalMask&) = delete;
  SignalMask& operator=(const SignalMask&) = delete;
  const sigset_t& set() const { return set_; }

private:
  sigset_t set_{};
  sigset_t old_{};
};

} // namespace detail

inline int cmd_serve(const Config& cfg, const Flags& f, std::ostream& out, std::ostream& err) {
  const auto opts = cfg.service();
  std::shared_ptr<const RagEngine> engine;
  try {
    engine = make_engine(cfg, f.index);
  } catch (const Error& e) {
    err << "error: refusing to start: " << e.what() << '\n';
    return kExitError;
  }
  Service service(engine, opts.cors_origins);

  detail::SignalMask mask;
  httplib::Server server;
  service.mount(server, &err);
  int port = opts.port;
  if (port == 0) {
    port = server.bind_to_any_port(opts.host);
    if (port < 0) port = 0;
  } else if (!server.bind_to_port(opts.host, port)) {
    port = 0;
  }
  if (port == 0) {
    err << "error: cannot bind " << opts.host << ":" << opts.port << '\n';
    return kExitError;
  }
  out << "listening on " << opts.host << ":" << port << std::endl;

  std::atomic<bool> finished{false};
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&mask.set(), &sig);
    if (!finished) server.stop();
  });
  const bool ok = server.listen_after_bind();
  finished = true;
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  err << "INFO serve shutdown" << std::endl;
  return ok ? kExitOk : kExitError;
}

inline int run_cli(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Flags f;
  CLI::App app{"Grounded question answering over a legal corpus", "legalrag"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();

  app.add_option("--config", f.config_path, "Config file (key = value sections)");
  app.add_option("--index", f.index, "Index file path");
  app.add_option("--corpus", f.corpus, "Corpus directory");
  app.add_option("--k", f.k, "Number of chunks to retrieve");
  app.add_option("--tau", f.tau, "Similarity floor for the guardrail");
  app.add_option("--chunk-size", f.chunk_size, "Chunk size in characters");
  app.add_option("--overlap", f.overlap, "Overlap between chunks in characters");
  app.add_option("--backend", f.backend, "Gateway backend")
      ->check(CLI::IsMember({"remote", "deterministic-stub"}));
  app.add_flag("--show-context", f.show_context, "Print retrieved context blocks");
  app.add_option("--out", f.out, "Output file");
  app.add_flag("--verbose", f.verbose, "Print the effective configuration");

  auto* ingest = app.add_subcommand("ingest", "Build an index from a corpus directory");
  auto* query = app.add_subcommand("query", "Answer one question");
  query->add_option("question", f.question, "Question text")->required();
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--bind", f.bind, "host:port");
  auto* eval = app.add_subcommand("eval", "Run an evaluation");
  eval->require_subcommand(1);
  eval->fallthrough();
  auto* aibe = eval->add_subcommand("aibe", "Multiple-choice accuracy");
  aibe->add_option("--dataset", f.dataset, "MCQ JSON lines")->required();
  aibe->add_option("--exclude", f.exclude, "File of excluded ids");
  auto* semantic = eval->add_subcommand("semantic", "Semantic similarity scoring");
  semantic->add_option("--dataset", f.dataset, "Question/reference JSON lines")->required();
  auto* pei = eval->add_subcommand("pei", "Parameter efficiency table");
  pei->add_option("--models", f.models, "CSV model,params_b,accuracy_pct")->required();
  auto* config = app.add_subcommand("config", "Configuration tools");
  config->require_subcommand(1);
  auto* show = config->add_subcommand("show", "Print the effective configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitError;
  }

  try {
    const Config cfg = resolve_config(f);
    if (f.verbose) err << cfg.show();
    if (*show) {
      out << cfg.show();
      return kExitOk;
    }
    if (*ingest) return cmd_ingest(cfg, f, out, err);
    if (*query) return cmd_query(cfg, f, out);
    if (*serve) return cmd_serve(cfg, f, out, err);
    if (*aibe) return cmd_eval_aibe(cfg, f, out, err);
    if (*semantic) return cmd_eval_semantic(cfg, f, out, err);
    if (*pei) return cmd_eval_pei(f, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}

} // namespace legalrag::cli
