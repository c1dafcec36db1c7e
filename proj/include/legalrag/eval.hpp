#pragma once

// Evaluation instruments: MCQ accuracy, greedy-matching semantic F1 with a
// score histogram, and the parameter efficiency index (accuracy points per
// billion parameters).

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdio>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "legalrag/embedding.hpp"
#include "legalrag/error.hpp"
#include "legalrag/rag_engine.hpp"
#include "legalrag/utf8.hpp"

namespace legalrag {

inline std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  return buf;
}

/// Round-half-even at `decimals` places (relies on the default FE_TONEAREST mode).
inline double round_half_even(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::nearbyint(value * scale) / scale;
}

inline std::string json_string(std::string_view s) { return nlohmann::json(std::string(s)).dump(); }

/// Something that answers a question the way RagEngine does.
template <class T>
concept AnswerSource = requires(const T& t, std::string_view q) {
  { t.answer(q) } -> std::same_as<GroundedAnswer>;
};

namespace detail {

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) fn(i);
    });
}

} // namespace detail

// ---------------------------------------------------------------- accuracy

inline double compute_accuracy(std::size_t q_correct, std::size_t q_total) {
  if (q_total == 0) throw ContractError("accuracy requires q_total >= 1");
  if (q_correct > q_total) throw ContractError("q_correct exceeds q_total");
  return static_cast<double>(q_correct) / static_cast<double>(q_total);
}

struct McqItem {
  std::string id;
  std::string question;
  std::map<char, std::string> options;  // 'A'..'D'
  char gold = 'A';
  bool outdated = false;
};

inline void validate(const McqItem& item) {
  if (item.id.empty()) throw DatasetError("MCQ item without id");
  if (item.options.size() < 2 || item.options.size() > 4)
    throw DatasetError("item " + item.id + ": expected 2-4 options");
  for (const auto& [letter, text] : item.options)
    if (letter < 'A' || letter > 'D') throw DatasetError("item " + item.id + ": option keys must be A-D");
  if (!item.options.contains(item.gold))
    throw DatasetError("item " + item.id + ": answer is not one of the options");
}

/// JSON lines: {"id", "question", "options": {"A": ...}, "answer", "outdated"?}.
inline std::vector<McqItem> parse_mcq_jsonl(std::istream& in) {
  std::vector<McqItem> items;
  std::set<std::string> seen;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (utf8::trim(line).empty()) continue;
    const auto where = "line " + std::to_string(lineno) + ": ";
    McqItem item;
    try {
      auto j = nlohmann::json::parse(line);
      item.id = j.at("id").get<std::string>();
      item.question = j.at("question").get<std::string>();
      for (const auto& [key, value] : j.at("options").items()) {
        if (key.size() != 1) throw DatasetError(where + "option key must be a single letter");
        item.options[static_cast<char>(std::toupper(static_cast<unsigned char>(key[0])))] =
            value.get<std::string>();
      }
      const auto answer = j.at("answer").get<std::string>();
      if (answer.size() != 1) throw DatasetError(where + "answer must be a single letter");
      item.gold = static_cast<char>(std::toupper(static_cast<unsigned char>(answer[0])));
      item.outdated = j.value("outdated", false);
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError(where + e.what());
    }
    try {
      validate(item);
    } catch (const DatasetError& e) {
      throw DatasetError(where + e.what());
    }
    if (!seen.insert(item.id).second) throw DatasetError(where + "duplicate id " + item.id);
    items.push_back(std::move(item));
  }
  return items;
}

/// One id per line; blank lines and '#' comments ignored.
inline std::set<std::string> parse_exclusions(std::istream& in) {
  std::set<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    std::string id(utf8::trim(line));
    if (!id.empty() && id.front() != '#') ids.insert(std::move(id));
  }
  return ids;
}

inline constexpr std::string_view kMcqInstruction =
    "Respond with only the letter of the correct option.";

inline std::string render_mcq_question(const McqItem& item) {
  std::string out = item.question;
  out += '\n';
  for (const auto& [letter, text] : item.options) {
    out += letter;
    out += ". ";
    out += text;
    out += '\n';
  }
  out += kMcqInstruction;
  return out;
}

/// First standalone A-D letter (case-insensitive), scanning left to right.
inline std::optional<char> extract_choice(std::string_view text) {
  // Bytes >= 0x80 belong to non-ASCII words and count as word characters.
  const auto is_word = [](char c) {
    const auto u = static_cast<unsigned char>(c);
    return u >= 0x80 || std::isalnum(u);
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(text[i])));
    if (up < 'A' || up > 'D') continue;
    const bool left_ok = i == 0 || !is_word(text[i - 1]);
    const bool right_ok = i + 1 == text.size() || !is_word(text[i + 1]);
    if (left_ok && right_ok) return up;
  }
  return std::nullopt;
}

struct ItemResult {
  std::string id;
  std::optional<char> predicted;
  char gold = 'A';
  bool correct = false;
  std::string error;  // set when generation failed
};

struct AccuracyReport {
  std::size_t q_correct = 0;
  std::size_t q_total = 0;
  std::size_t excluded = 0;
  std::size_t unparseable = 0;
  double accuracy = 0.0;
  std::vector<ItemResult> per_item;  // sorted by id
};

inline std::string to_json(const AccuracyReport& r) {
  std::ostringstream out;
  out << "{\"q_correct\":" << r.q_correct << ",\"q_total\":" << r.q_total
      << ",\"excluded\":" << r.excluded << ",\"unparseable\":" << r.unparseable
      << ",\"accuracy\":" << format_fixed(r.accuracy, 4) << ",\"per_item\":[";
  for (std::size_t i = 0; i < r.per_item.size(); ++i) {
    const auto& it = r.per_item[i];
    if (i) out << ',';
    out << "{\"id\":" << json_string(it.id) << ",\"predicted\":"
        << (it.predicted ? json_string(std::string(1, *it.predicted)) : "null")
        << ",\"gold\":" << json_string(std::string(1, it.gold))
        << ",\"correct\":" << (it.correct ? "true" : "false");
    if (!it.error.empty()) out << ",\"error\":" << json_string(it.error);
    out << '}';
  }
  out << "]}";
  return out.str();
}

/// Unparseable and errored generations count as incorrect, never as skipped.
template <AnswerSource Engine>
AccuracyReport run_mcq_benchmark(const std::vector<McqItem>& items, const Engine& engine,
                                 std::set<std::string> exclusions = {},
                                 std::size_t workers = 1) {
  for (const auto& item : items)
    if (item.outdated) exclusions.insert(item.id);

  std::vector<const McqItem*> active;
  AccuracyReport report;
  for (const auto& item : items) {
    if (exclusions.contains(item.id))
      ++report.excluded;
    else
      active.push_back(&item);
  }
  if (active.empty()) throw ContractError("no MCQ items left after exclusions");

  report.per_item.resize(active.size());
  detail::parallel_for(active.size(), workers, [&](std::size_t i) {
    const McqItem& item = *active[i];
    ItemResult& res = report.per_item[i];
    res.id = item.id;
    res.gold = item.gold;
    try {
      res.predicted = extract_choice(engine.answer(render_mcq_question(item)).text);
    } catch (const std::exception& e) {
      res.error = e.what();
    }
    res.correct = res.predicted && *res.predicted == item.gold;
  });

  std::sort(report.per_item.begin(), report.per_item.end(),
            [](const ItemResult& a, const ItemResult& b) { return a.id < b.id; });
  for (const auto& r : report.per_item) {
    report.q_correct += r.correct;
    report.unparseable += !r.predicted.has_value();
  }
  report.q_total = report.per_item.size();
  report.accuracy = compute_accuracy(report.q_correct, report.q_total);
  return report;
}

// ---------------------------------------------------------------- semantic

struct SemanticScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline double harmonic_f1(double p, double r) {
  const double sum = p + r;
  return sum > 0.0 ? 2.0 * p * r / sum : 0.0;
}

namespace detail {

inline double mean_best_match(std::span<const EmbeddingVector> from,
                              std::span<const EmbeddingVector> to) {
  double total = 0.0;
  for (const auto& a : from) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& b : to) best = std::max(best, dot(a.values, b.values));
    total += best;
  }
  return total / static_cast<double>(from.size());
}

} // namespace detail

/// Greedy max-matching precision/recall over normalized token embeddings,
/// combined by harmonic mean. No IDF weighting, no baseline rescaling.
inline SemanticScore score_semantic(std::span<const EmbeddingVector> candidate,
                                    std::span<const EmbeddingVector> reference) {
  if (candidate.empty() || reference.empty())
    throw ContractError("semantic scoring needs non-empty token lists");
  const std::size_t dim = candidate.front().dim();
  for (auto side : {candidate, reference})
    for (const auto& v : side) {
      if (v.dim() != dim) throw ContractError("token embedding dimension mismatch");
      if (!is_unit(v.values)) throw ContractError("token embeddings must be normalized");
    }
  SemanticScore s;
  s.precision = detail::mean_best_match(candidate, reference);
  s.recall = detail::mean_best_match(reference, candidate);
  s.f1 = harmonic_f1(s.precision, s.recall);
  return s;
}

using TokenEmbedder = std::function<EmbeddingVector(std::string_view)>;

inline SemanticScore score_texts(std::string_view candidate, std::string_view reference,
                                 const TokenEmbedder& embed) {
  const auto embed_all = [&](std::string_view text) {
    std::vector<EmbeddingVector> out;
    for (const auto& tok : utf8::split_whitespace(text)) out.push_back(embed(tok));
    return out;
  };
  const auto cand = embed_all(candidate);
  const auto ref = embed_all(reference);
  if (cand.empty()) throw ContractError("generated answer has no tokens");
  if (ref.empty()) throw ContractError("reference answer has no tokens");
  return score_semantic(cand, ref);
}

struct SemanticPair {
  std::string question;
  std::string reference;
};

/// JSON lines: {"question": ..., "reference": ...} ("answer" accepted for reference).
inline std::vector<SemanticPair> parse_semantic_jsonl(std::istream& in) {
  std::vector<SemanticPair> pairs;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (utf8::trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      SemanticPair p;
      p.question = j.at("question").get<std::string>();
      p.reference = j.contains("reference") ? j["reference"].get<std::string>()
                                            : j.at("answer").get<std::string>();
      pairs.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return pairs;
}

struct PairResult {
  std::string question;
  std::string answer;
  std::optional<SemanticScore> score;
  std::string error;
};

inline constexpr std::size_t kHistogramBuckets = 20;

struct SemanticReport {
  std::vector<PairResult> per_pair;  // input order
  std::size_t scored = 0;
  std::size_t failed = 0;
  double mean = 0.0;
  double median = 0.0;
  std::vector<std::size_t> histogram = std::vector<std::size_t>(kHistogramBuckets, 0);
};

/// Bucket i covers [i/20, (i+1)/20); 1.0 lands in the last bucket and values
/// outside [0, 1] are clamped.
inline std::size_t histogram_bucket(double f1) {
  const double clamped = std::clamp(f1, 0.0, 1.0);
  const auto b = static_cast<std::size_t>(std::floor(clamped * kHistogramBuckets));
  return std::min(b, kHistogramBuckets - 1);
}

inline SemanticReport summarize(std::vector<PairResult> results) {
  SemanticReport r;
  r.per_pair = std::move(results);
  std::vector<double> f1s;
  for (const auto& p : r.per_pair) {
    if (!p.score) {
      ++r.failed;
      continue;
    }
    f1s.push_back(p.score->f1);
    ++r.histogram[histogram_bucket(p.score->f1)];
  }
  r.scored = f1s.size();
  if (f1s.empty()) return r;
  r.mean = std::accumulate(f1s.begin(), f1s.end(), 0.0) / static_cast<double>(f1s.size());
  std::sort(f1s.begin(), f1s.end());
  const std::size_t mid = f1s.size() / 2;
  r.median = f1s.size() % 2 ? f1s[mid] : (f1s[mid - 1] + f1s[mid]) / 2.0;
  return r;
}

template <AnswerSource Engine>
SemanticReport run_semantic_eval(const std::vector<SemanticPair>& pairs, const Engine& engine,
                                 const TokenEmbedder& embed, std::size_t workers = 1) {
  if (pairs.empty()) throw ContractError("semantic evaluation needs at least one pair");
  std::vector<PairResult> results(pairs.size());
  detail::parallel_for(pairs.size(), workers, [&](std::size_t i) {
    auto& res = results[i];
    res.question = pairs[i].question;
    try {
      res.answer = engine.answer(pairs[i].question).text;
      res.score = score_texts(res.answer, pairs[i].reference, embed);
    } catch (const std::exception& e) {
      res.error = e.what();
    }
  });
  return summarize(std::move(results));
}

inline std::string histogram_csv(const SemanticReport& r) {
  std::string out = "bucket_low,bucket_high,count\n";
  for (std::size_t i = 0; i < kHistogramBuckets; ++i) {
    out += format_fixed(static_cast<double>(i) / kHistogramBuckets, 4) + ',' +
           format_fixed(static_cast<double>(i + 1) / kHistogramBuckets, 4) + ',' +
           std::to_string(r.histogram[i]) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------- PEI

struct PeiRecord {
  std::string model_name;
  double params_b = 0.0;
  double accuracy_pct = 0.0;
  double pei = 0.0;

  double pei_display() const { return round_half_even(pei, 2); }
};

inline PeiRecord compute_pei(double accuracy_pct, double params_b, std::string model_name = {}) {
  if (!(params_b > 0.0) || !std::isfinite(params_b))
    throw ContractError("parameter count must be positive");
  if (!std::isfinite(accuracy_pct)) throw ContractError("accuracy must be finite");
  return {std::move(model_name), params_b, accuracy_pct, accuracy_pct / params_b};
}

/// CSV with header "model,params_b,accuracy_pct"; a trailing '%' on accuracy is accepted.
inline std::vector<PeiRecord> parse_models_csv(std::istream& in) {
  std::vector<PeiRecord> out;
  std::string line;
  std::size_t lineno = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (utf8::trim(line).empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string col; std::getline(ss, col, ',');) cols.emplace_back(utf8::trim(col));
    if (header) {
      header = false;
      if (cols.size() < 3 || cols[0] != "model" || cols[1] != "params_b" || cols[2] != "accuracy_pct")
        throw DatasetError("models CSV must start with header model,params_b,accuracy_pct");
      continue;
    }
    if (cols.size() != 3) throw DatasetError("line " + std::to_string(lineno) + ": expected 3 columns");
    if (!cols[2].empty() && cols[2].back() == '%') cols[2].pop_back();
    try {
      std::size_t used = 0;
      const double params = std::stod(cols[1], &used);
      if (used != cols[1].size()) throw std::invalid_argument("params_b");
      const double acc = std::stod(cols[2], &used);
      if (used != cols[2].size()) throw std::invalid_argument("accuracy_pct");
      out.push_back(compute_pei(acc, params, cols[0]));
    } catch (const std::logic_error& e) {
      throw DatasetError("line " + std::to_string(lineno) + ": bad number (" + e.what() + ")");
    } catch (const ContractError& e) {
      throw DatasetError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (header) throw DatasetError("models CSV is empty");
  return out;
}

inline std::string pei_csv(const std::vector<PeiRecord>& records) {
  std::string out = "model,params_b,accuracy_pct,pei\n";
  for (const auto& r : records)
    out += r.model_name + ',' + format_fixed(r.params_b, 4) + ',' + format_fixed(r.accuracy_pct, 4) +
           ',' + format_fixed(r.pei_display(), 2) + '\n';
  return out;
}

} // namespace legalrag
