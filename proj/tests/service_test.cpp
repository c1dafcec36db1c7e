#include "legalrag/service.hpp"

#include <gtest/gtest.h>

#include <sstream>
#include <thread>

#include "sample_engine.hpp"
#include "test_support.hpp"

namespace legalrag {
namespace {

using nlohmann::json;

json body_of(const Reply& r) { return json::parse(r.body); }

std::string query_body(std::string_view q) { return json{{"question", q}}.dump(); }

/// Response body with the wall-clock field removed.
std::string stable(const std::string& body) {
  auto j = nlohmann::ordered_json::parse(body);
  EXPECT_TRUE(j.contains("latency_ms"));
  EXPECT_TRUE(j["latency_ms"].is_number());
  EXPECT_GE(j["latency_ms"].get<double>(), 0.0);
  j.erase("latency_ms");
  return j.dump();
}

class ThrowingGenerator final : public Generator {
public:
  explicit ThrowingGenerator(bool gateway_error) : gateway_error_(gateway_error) {}
  GenerationResponse generate(const GenerationRequest&) override {
    if (gateway_error_) throw GatewayError("secret upstream detail", true);
    throw std::runtime_error("secret internal detail");
  }

private:
  bool gateway_error_;
};

std::shared_ptr<const RagEngine> engine_with(std::shared_ptr<Generator> gen) {
  auto gw = std::make_shared<const Gateway>(std::make_shared<DeterministicEmbedder>(384), std::move(gen), 384,
                                            "deterministic-stub", "stub");
  return test::sample_engine(gw);
}

class ServiceTest : public ::testing::Test {
protected:
  static void SetUpTestSuite() { engine_ = test::sample_engine(); }
  static void TearDownTestSuite() { engine_.reset(); }
  static std::shared_ptr<const RagEngine> engine_;
};
std::shared_ptr<const RagEngine> ServiceTest::engine_;

TEST_F(ServiceTest, RejectsInvalidBodies) {
  Service s(engine_);
  for (const std::string& body : {std::string("not json"), std::string("[]"), std::string("{}"),
                                 std::string(R"({"question": 5})"), query_body(""), query_body(" \n\t ")}) {
    const auto r = s.handle_query(body);
    EXPECT_EQ(r.status, 400) << body;
    EXPECT_EQ(body_of(r)["error"], "invalid_request");
  }
}

TEST_F(ServiceTest, QuestionLengthLimitCountsCharacters) {
  Service s(engine_);
  std::string at_limit, over;
  for (std::size_t i = 0; i < kMaxQuestionChars; ++i) at_limit += "é";
  over = at_limit + "é";
  EXPECT_EQ(s.handle_query(query_body(at_limit)).status, 200);
  EXPECT_EQ(s.handle_query(query_body(over)).status, 400);
  EXPECT_EQ(s.handle_query(std::string(kMaxRequestBytes + 1, ' ')).status, 413);
}

TEST_F(ServiceTest, GuardrailReturnsRefusal) {
  Service s(engine_);
  const auto r = s.handle_query(query_body(test::kUnrelatedQuestion));
  ASSERT_EQ(r.status, 200);
  const auto j = body_of(r);
  EXPECT_EQ(j["answer"], kRefusal);
  EXPECT_EQ(j["grounded"], false);
  EXPECT_TRUE(j["contexts"].empty());
}

TEST_F(ServiceTest, GroundedAnswerMatchesGolden) {
  Service s(engine_);
  const auto r = s.handle_query(query_body(test::kGoldenQuestion));
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(stable(r.body) + "\n", test::read_file(test::source_dir() / "tests/golden/query_consumer.json"));
  const auto j = body_of(r);
  EXPECT_EQ(j["grounded"], true);
  double prev = 2.0;
  for (const auto& c : j["contexts"]) {
    EXPECT_GE(c["score"].get<double>(), 0.25);
    EXPECT_LE(c["score"].get<double>(), prev);
    prev = c["score"].get<double>();
  }
}

TEST_F(ServiceTest, ResponseFieldOrder) {
  GroundedAnswer a{"x", true, {SearchHit{0, ChunkMeta{"d#0", "d", 0, 1, "t"}, 0.5}}, 10};
  EXPECT_EQ(Service::query_response_json(a, 1.5).dump(),
            R"({"answer":"x","grounded":true,"contexts":[{"text":"t","score":0.5,"doc_id":"d","chunk_id":"d#0"}],"latency_ms":1.5})");
}

TEST_F(ServiceTest, HealthAndSources) {
  Service s(engine_);
  const auto h = s.handle_health();
  ASSERT_EQ(h.status, 200);
  EXPECT_EQ(h.body, nlohmann::ordered_json({{"index_count", engine_->index().count()},
                                            {"dim", 384},
                                            {"gateway_backend", "deterministic-stub"},
                                            {"version", kVersion}})
                        .dump());
  EXPECT_EQ(s.handle_health().body, h.body);

  const auto src = body_of(s.handle_sources());
  ASSERT_EQ(src.size(), 5u);
  std::size_t total = 0;
  std::string prev;
  for (const auto& e : src) {
    EXPECT_LT(prev, e["doc_id"].get<std::string>());
    prev = e["doc_id"];
    total += e["chunk_count"].get<std::size_t>();
  }
  EXPECT_EQ(total, engine_->index().count());
}

TEST(Service, NoIndexAnswers503) {
  Service s(nullptr);
  EXPECT_EQ(s.handle_health().status, 503);
  EXPECT_EQ(body_of(s.handle_health())["error"], "index_not_loaded");
  EXPECT_EQ(s.handle_sources().status, 503);
  EXPECT_EQ(s.handle_query(query_body("anything")).status, 503);
  EXPECT_EQ(s.handle_query("{}").status, 400);
}

TEST(Service, GenerationFailuresDoNotLeakDetails) {
  Service unavailable(engine_with(std::make_shared<ThrowingGenerator>(true)));
  auto r = unavailable.handle_query(query_body(test::kGoldenQuestion));
  EXPECT_EQ(r.status, 503);
  EXPECT_EQ(body_of(r)["error"], "generation_unavailable");
  EXPECT_EQ(r.body.find("secret"), std::string::npos);

  Service broken(engine_with(std::make_shared<ThrowingGenerator>(false)));
  r = broken.handle_query(query_body(test::kGoldenQuestion));
  EXPECT_EQ(r.status, 500);
  EXPECT_EQ(body_of(r)["error"], "internal");
  EXPECT_EQ(body_of(r)["id"], "err-1");
  EXPECT_EQ(r.body.find("secret"), std::string::npos);
  // The guardrail still answers without touching the generator.
  EXPECT_EQ(broken.handle_query(query_body(test::kUnrelatedQuestion)).status, 200);
}

TEST(Service, OriginMatching) {
  Service s(nullptr, {"http://localhost", "https://app.example"});
  EXPECT_TRUE(s.origin_allowed("http://localhost"));
  EXPECT_TRUE(s.origin_allowed("http://localhost:5173"));
  EXPECT_TRUE(s.origin_allowed("https://app.example"));
  EXPECT_FALSE(s.origin_allowed("http://localhost.evil.com"));
  EXPECT_FALSE(s.origin_allowed("http://evil.com"));
  EXPECT_TRUE(Service(nullptr, {"*"}).origin_allowed("http://anything"));
}

class HttpTest : public ServiceTest {
protected:
  void SetUp() override {
    service_ = std::make_unique<Service>(engine_, std::vector<std::string>{"http://localhost"});
    service_->mount(server_, &log_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(10, 0);
    return c;
  }

  httplib::Server server_;
  std::unique_ptr<Service> service_;
  std::ostringstream log_;
  std::thread thread_;
  int port_ = 0;
};

TEST_F(HttpTest, QueryOverHttpMatchesHandler) {
  auto c = client();
  auto res = c.Post("/v1/query", query_body(test::kGoldenQuestion), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "application/json");
  EXPECT_EQ(stable(res->body), stable(service_->handle_query(query_body(test::kGoldenQuestion)).body));

  res = c.Post("/v1/query", query_body(test::kUnrelatedQuestion), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body)["answer"], kRefusal);
  EXPECT_EQ(json::parse(res->body)["grounded"], false);

  res = c.Post("/v1/query", "{", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);

  res = c.Post("/v1/query", std::string(kMaxRequestBytes + 10, 'x'), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 413);

  res = c.Get("/v1/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->body, service_->handle_health().body);
  res = c.Get("/v1/sources");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->body, service_->handle_sources().body);
}

TEST_F(HttpTest, Cors) {
  auto c = client();
  auto res = c.Get("/v1/health", {{"Origin", "http://localhost:5173"}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "http://localhost:5173");
  res = c.Get("/v1/health", {{"Origin", "http://evil.com"}});
  ASSERT_TRUE(res);
  EXPECT_FALSE(res->has_header("Access-Control-Allow-Origin"));

  res = c.Options("/v1/query", {{"Origin", "http://localhost"},
                                {"Access-Control-Request-Method", "POST"},
                                {"Access-Control-Request-Headers", "Content-Type"}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 204);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "http://localhost");
  EXPECT_NE(res->get_header_value("Access-Control-Allow-Methods").find("POST"), std::string::npos);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Headers"), "Content-Type");
}

TEST_F(HttpTest, ConcurrentQueriesAgree) {
  const auto expected = stable(service_->handle_query(query_body(test::kGoldenQuestion)).body);
  std::vector<std::string> got(8);
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < got.size(); ++i)
    threads.emplace_back([&, i] {
      auto c = client();
      if (auto res = c.Post("/v1/query", query_body(test::kGoldenQuestion), "application/json"))
        got[i] = stable(res->body);
    });
  for (auto& t : threads) t.join();
  for (const auto& g : got) EXPECT_EQ(g, expected);
}

TEST_F(HttpTest, LogsOneLinePerRequest) {
  auto c = client();
  ASSERT_TRUE(c.Get("/v1/health"));
  ASSERT_TRUE(c.Post("/v1/query", "{}", "application/json"));
  server_.stop();
  thread_.join();
  thread_ = std::thread([] {});
  const auto log = log_.str();
  EXPECT_NE(log.find("INFO request method=GET path=/v1/health status=200 bytes="), std::string::npos);
  EXPECT_NE(log.find("INFO request method=POST path=/v1/query status=400 bytes="), std::string::npos);
}

} // namespace
} // namespace legalrag
