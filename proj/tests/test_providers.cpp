#include <atomic>
#include <chrono>
#include <cmath>
#include <string>
#include <thread>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "textdial/providers/http.hpp"
#include "textdial/providers/mock.hpp"

using namespace textdial;
using nlohmann::json;
using namespace std::chrono_literals;

namespace {

std::vector<ChatMessage> user(std::string text) { return {{Role::User, std::move(text)}}; }

MockProvider mock_with(MockChatMode chat, MockEmbeddingMode sentence = MockEmbeddingMode::Identity,
                       MockEmbeddingMode token = MockEmbeddingMode::Orthogonal) {
  MockConfig c;
  c.chat_mode = chat;
  c.sentence_mode = sentence;
  c.token_mode = token;
  return MockProvider(c);
}

// Local HTTP server on an ephemeral port, stopped on destruction.
class StubServer {
 public:
  StubServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Server& server() { return server_; }
  std::string url(const std::string& path) const {
    return "http://127.0.0.1:" + std::to_string(port_) + path;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

json chat_body(const std::string& text) {
  return {{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", text}}}}})}};
}

HttpProviderConfig fast_config(const StubServer& stub, std::vector<std::chrono::milliseconds>* slept) {
  HttpProviderConfig c;
  c.chat_url = stub.url("/v1/chat/completions");
  c.embeddings_url = stub.url("/v1/embeddings");
  c.qa_url = stub.url("/qa");
  c.timeout = std::chrono::seconds(5);
  c.retry.base_delay = 1ms;
  c.retry.sleep = [slept](std::chrono::milliseconds d) {
    if (slept) slept->push_back(d);
  };
  return c;
}

}  // namespace

// --- mock chat -------------------------------------------------------------

TEST(MockChat, EchoReturnsPrompt) {
  auto m = mock_with(MockChatMode::Echo);
  EXPECT_EQ(chat_complete(m, user("ping"), {}), "ping");
}

TEST(MockChat, ScriptedFixtureVerbatim) {
  auto m = mock_with(MockChatMode::Scripted);
  m.load_chat_fixtures(std::filesystem::path(TEXTDIAL_FIXTURE_DIR) / "scripted_chat.json");
  chat_complete(m, user("first"), {});
  chat_complete(m, user("second"), {});
  EXPECT_EQ(chat_complete(m, user("third"), {}),
            "Why do two samples from the same population differ?");
  EXPECT_THROW(chat_complete(m, user("fourth"), {}), ProviderError);
}

TEST(ChatComplete, RequiresTrailingUserMessage) {
  auto m = mock_with(MockChatMode::Echo);
  EXPECT_THROW(chat_complete(m, {}, {}), std::invalid_argument);
  EXPECT_THROW(chat_complete(m, {{Role::User, "a"}, {Role::Assistant, "b"}}, {}),
               std::invalid_argument);
}

TEST(ChatComplete, TrimsAndValidatesParams) {
  auto m = mock_with(MockChatMode::Echo);
  EXPECT_EQ(chat_complete(m, user("  padded \n"), {}), "padded");
  GenerationParams hot{2.5, 256, std::nullopt};
  EXPECT_THROW(chat_complete(m, user("x"), hot), Error);
  GenerationParams none{0.7, 0, std::nullopt};
  EXPECT_THROW(chat_complete(m, user("x"), none), Error);
}

TEST(MockChat, RolePlayIsDeterministicAcrossInstances) {
  auto a = mock_with(MockChatMode::RolePlay);
  auto b = mock_with(MockChatMode::RolePlay);
  const std::string prompt =
      "Task: You are a student.\n1. Section Title: Graphs\n4. Bold Terms in Section: bar graph; "
      "line graph\n";
  for (std::int64_t seed = 0; seed < 20; ++seed) {
    GenerationParams p{0.7, 256, seed};
    EXPECT_EQ(chat_complete(a, user(prompt), p), chat_complete(b, user(prompt), p));
  }
}

// --- mock embeddings ---------------------------------------------------------

TEST(MockEmbedding, IdentityModeSelfCosineIsOne) {
  auto m = mock_with(MockChatMode::Echo, MockEmbeddingMode::Identity);
  const auto x = embed_sentence(m, "the mean of a sample");
  EXPECT_NEAR(cosine(x, embed_sentence(m, "the mean of a sample")), 1.0, 1e-12);
  EXPECT_LT(std::abs(cosine(x, embed_sentence(m, "something else"))), 0.2);
}

TEST(MockEmbedding, OrthogonalModeDistinctStringsAreOrthogonal) {
  auto m = mock_with(MockChatMode::Echo, MockEmbeddingMode::Orthogonal);
  EXPECT_EQ(cosine(embed_sentence(m, "alpha"), embed_sentence(m, "beta")), 0.0);
  EXPECT_EQ(cosine(embed_sentence(m, "alpha"), embed_sentence(m, "alpha")), 1.0);
}

TEST(MockEmbedding, TokenCountAndOrthogonality) {
  auto m = mock_with(MockChatMode::Echo);
  EXPECT_EQ(embed_tokens(m, "the cat").size(), 2u);
  const auto ab = embed_tokens(m, "a b");
  ASSERT_EQ(ab.size(), 2u);
  EXPECT_EQ(cosine(ab[0], ab[1]), 0.0);
  EXPECT_EQ(cosine(ab[0], ab[0]), 1.0);
}

TEST(MockEmbedding, EmptyInputIsCallerError) {
  auto m = mock_with(MockChatMode::Echo);
  EXPECT_THROW(embed_sentence(m, ""), std::invalid_argument);
  EXPECT_THROW(embed_tokens(m, ""), std::invalid_argument);
  EXPECT_THROW(embed_tokens(m, " ,.! "), std::invalid_argument);
}

TEST(MockEmbedding, AllOutputsUnitNorm) {
  auto m = mock_with(MockChatMode::Echo);
  m.set_sentence_embedding("scaled", {3.0, 4.0});
  EXPECT_NEAR(embed_sentence(m, "scaled").norm(), 1.0, 1e-12);
  for (const char* s : {"a", "bb", "a longer sentence", "Ünïcode"}) {
    EXPECT_LT(std::abs(embed_sentence(m, s).norm() - 1.0), 1e-6);
    for (const auto& v : embed_tokens(m, s)) EXPECT_LT(std::abs(v.norm() - 1.0), 1e-6);
  }
}

TEST(Cosine, DimensionMismatchThrows) {
  EXPECT_THROW(cosine(EmbeddingVector{{1.0}}, EmbeddingVector{{1.0, 0.0}}), Error);
}

// --- extractive QA -------------------------------------------------------------

TEST(ExtractiveQa, KeyedFixture) {
  auto m = mock_with(MockChatMode::Echo);
  m.set_qa_answer("capital?", "Paris", 0.9);
  const auto r = extractive_qa(m, "capital?", "Paris is the capital of France.");
  EXPECT_EQ(r.answer, "Paris");
  EXPECT_DOUBLE_EQ(r.confidence, 0.9);
  EXPECT_EQ(r.offset, 0u);
}

TEST(ExtractiveQa, InvalidMarkerEverywhereGivesEmpty) {
  auto m = mock_with(MockChatMode::Echo);
  m.set_qa_answer("q?", "CANNOTANSWER", 0.8);
  std::string long_context;
  for (int i = 0; i < 900; ++i) long_context += "word ";
  const auto r = extractive_qa(m, "q?", long_context);
  EXPECT_EQ(r.answer, "");
  EXPECT_EQ(r.confidence, 0.0);
  EXPECT_GT(m.qa_calls(), 1u);
}

TEST(ExtractiveQa, ShortContextQueriesOneWindow) {
  auto m = mock_with(MockChatMode::Echo);
  extractive_qa(m, "what is a sample?", "A sample is a subset.");
  EXPECT_EQ(m.qa_calls(), 1u);
}

TEST(ExtractiveQa, WindowsSlideByHalfTheSize) {
  std::string context;
  for (int i = 0; i < 1000; ++i) context += "w" + std::to_string(i) + " ";
  const auto windows = qa_windows(context);
  ASSERT_EQ(windows.size(), 4u);  // token starts 0, 200, 400, 600
  EXPECT_EQ(context.substr(windows[1].first, 4), "w200");
  EXPECT_EQ(context.substr(windows[3].first, 4), "w600");
  EXPECT_EQ(context.substr(windows[3].second - 4, 4), "w999");
  EXPECT_EQ(qa_windows("tiny").size(), 1u);
}

namespace {

// Answers with a confidence encoded in the window's first token.
class WindowScorer : public MockProvider {
 public:
  QAResult answer_window(std::string_view, std::string_view context) override {
    const auto toks = tokenize(context);
    const std::string first = toks.front();
    const double conf = first == "w200" || first == "w400" ? 0.7 : 0.2;
    return {first, conf, 0};
  }
};

}  // namespace

TEST(ExtractiveQa, HighestConfidenceTiesGoToEarliestWindow) {
  WindowScorer m;
  std::string context;
  for (int i = 0; i < 1000; ++i) context += "w" + std::to_string(i) + " ";
  const auto r = extractive_qa(m, "q", context);
  EXPECT_EQ(r.answer, "w200");
  EXPECT_DOUBLE_EQ(r.confidence, 0.7);
  EXPECT_EQ(context.substr(r.offset, 4), "w200");
}

TEST(ExtractiveQa, DefaultMockFindsOverlappingSentence) {
  auto m = mock_with(MockChatMode::Echo);
  const std::string ctx = "The mean is an average. The median is the middle value.";
  const auto r = extractive_qa(m, "What is the median value?", ctx);
  EXPECT_EQ(r.answer, "The median is the middle value.");
  EXPECT_EQ(ctx.substr(r.offset, r.answer.size()), r.answer);
  EXPECT_GT(r.confidence, 0.0);
  EXPECT_LE(r.confidence, 1.0);
}

TEST(InvalidAnswer, Normalization) {
  for (const char* a : {"", "   ", "CANNOTANSWER", " cannotanswer ", "Unanswerable"}) {
    EXPECT_TRUE(is_invalid_answer(a)) << a;
  }
  EXPECT_FALSE(is_invalid_answer("Paris"));
}

// --- errors and retry ------------------------------------------------------------

TEST(ProviderError, RetryableKinds) {
  EXPECT_TRUE(ProviderError(ProviderErrorKind::RateLimited, "").retryable());
  EXPECT_TRUE(ProviderError(ProviderErrorKind::ServerError, "").retryable());
  EXPECT_TRUE(ProviderError(ProviderErrorKind::Timeout, "").retryable());
  EXPECT_FALSE(ProviderError(ProviderErrorKind::BadRequest, "").retryable());
  EXPECT_FALSE(ProviderError(ProviderErrorKind::MalformedResponse, "").retryable());
}

TEST(RetryPolicy, DelaysGrowExponentiallyWithBoundedJitter) {
  RetryPolicy p;
  std::mt19937_64 rng(1);
  for (int attempt = 1; attempt <= 4; ++attempt) {
    const double expected = 1000.0 * std::pow(2.0, attempt - 1);
    for (int k = 0; k < 50; ++k) {
      const auto d = static_cast<double>(p.delay_for(attempt, rng).count());
      EXPECT_GE(d, expected);
      EXPECT_LE(d, expected * 1.25);
    }
  }
}

TEST(HttpProvider, SucceedsAfterThreeRateLimits) {
  StubServer stub;
  std::atomic<int> calls{0};
  stub.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    if (++calls <= 3) {
      res.status = 429;
      return;
    }
    res.set_content(chat_body(" pong ").dump(), "application/json");
  });
  std::vector<std::chrono::milliseconds> slept;
  HttpProvider p(fast_config(stub, &slept));
  EXPECT_EQ(chat_complete(p, user("ping"), {}), "pong");
  EXPECT_EQ(calls.load(), 4);
  EXPECT_EQ(slept.size(), 3u);
}

TEST(HttpProvider, RetryableFailuresBelowBudgetAlwaysSucceed) {
  for (int k = 0; k < 5; ++k) {
    StubServer stub;
    std::atomic<int> calls{0};
    stub.server().Post("/v1/chat/completions",
                       [&](const httplib::Request&, httplib::Response& res) {
                         if (calls++ < k) {
                           res.status = k % 2 ? 503 : 429;
                           return;
                         }
                         res.set_content(chat_body("ok").dump(), "application/json");
                       });
    HttpProvider p(fast_config(stub, nullptr));
    EXPECT_EQ(chat_complete(p, user("ping"), {}), "ok") << k;
  }
}

TEST(HttpProvider, FiveFailuresExhaustTheBudget) {
  StubServer stub;
  std::atomic<int> calls{0};
  stub.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 429;
  });
  std::vector<std::chrono::milliseconds> slept;
  HttpProvider p(fast_config(stub, &slept));
  try {
    chat_complete(p, user("ping"), {});
    FAIL();
  } catch (const ProviderError& e) {
    EXPECT_EQ(e.provider_kind(), ProviderErrorKind::RateLimited);
  }
  EXPECT_EQ(calls.load(), 5);
  EXPECT_EQ(slept.size(), 4u);
}

TEST(HttpProvider, BadRequestIsNotRetriedAndKeyIsRedacted) {
  StubServer stub;
  std::atomic<int> calls{0};
  std::string auth;
  stub.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    ++calls;
    auth = req.get_header_value("Authorization");
    res.status = 400;
    res.set_content("bad key sk-secret-123", "text/plain");
  });
  auto cfg = fast_config(stub, nullptr);
  cfg.api_key = "sk-secret-123";
  HttpProvider p(cfg);
  try {
    chat_complete(p, user("ping"), {});
    FAIL();
  } catch (const ProviderError& e) {
    EXPECT_EQ(e.provider_kind(), ProviderErrorKind::BadRequest);
    EXPECT_EQ(std::string(e.what()).find("sk-secret-123"), std::string::npos);
  }
  EXPECT_EQ(calls.load(), 1);
  EXPECT_EQ(auth, "Bearer sk-secret-123");
}

TEST(HttpProvider, MalformedChatResponse) {
  StubServer stub;
  stub.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"choices": []})", "application/json");
  });
  HttpProvider p(fast_config(stub, nullptr));
  try {
    chat_complete(p, user("ping"), {});
    FAIL();
  } catch (const ProviderError& e) {
    EXPECT_EQ(e.provider_kind(), ProviderErrorKind::MalformedResponse);
  }
}

TEST(HttpProvider, SendsChatSchema) {
  StubServer stub;
  json seen;
  stub.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    res.set_content(chat_body("fine").dump(), "application/json");
  });
  auto cfg = fast_config(stub, nullptr);
  cfg.chat_model = "some-model";
  HttpProvider p(cfg);
  chat_complete(p, {{Role::System, "be brief"}, {Role::User, "hi"}}, {0.2, 64, 7});
  EXPECT_EQ(seen["model"], "some-model");
  EXPECT_EQ(seen["messages"][0]["role"], "system");
  EXPECT_EQ(seen["messages"][1]["content"], "hi");
  EXPECT_EQ(seen["max_tokens"], 64);
  EXPECT_EQ(seen["seed"], 7);
}

TEST(HttpProvider, EmbeddingsAreNormalizedAndDimensionChecked) {
  StubServer stub;
  stub.server().Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
    const auto body = json::parse(req.body);
    json data = json::array();
    for (const auto& in : body["input"]) {
      const std::string s = in.get<std::string>();
      if (s == "odd") {
        data.push_back({{"embedding", {1.0, 2.0, 3.0}}});
      } else {
        data.push_back({{"embedding", {3.0, 4.0}}});
      }
    }
    res.set_content(json{{"data", data}}.dump(), "application/json");
  });
  HttpProvider p(fast_config(stub, nullptr));
  const auto v = embed_sentence(p, "anything");
  EXPECT_NEAR(v.values[0], 0.6, 1e-12);
  EXPECT_NEAR(v.values[1], 0.8, 1e-12);
  EXPECT_EQ(embed_tokens(p, "two tokens").size(), 2u);
  EXPECT_THROW(embed_sentence(p, "odd"), ProviderError);
}

TEST(HttpProvider, ExtractiveQaEndpoint) {
  StubServer stub;
  stub.server().Post("/qa", [&](const httplib::Request& req, httplib::Response& res) {
    const auto body = json::parse(req.body);
    const std::string ctx = body["context"];
    if (ctx.find("Paris") == std::string::npos) {
      res.set_content(R"({"answer": "", "score": 0.0})", "application/json");
    } else {
      res.set_content(R"({"answer": "Paris", "score": 0.9})", "application/json");
    }
  });
  HttpProvider p(fast_config(stub, nullptr));
  const auto r = extractive_qa(p, "capital?", "It is known that Paris is the capital.");
  EXPECT_EQ(r.answer, "Paris");
  EXPECT_DOUBLE_EQ(r.confidence, 0.9);
  EXPECT_EQ(r.offset, 17u);
  EXPECT_EQ(extractive_qa(p, "capital?", "No city here.").answer, "");
}

TEST(HttpProvider, ThrottleBoundsInFlightRequests) {
  StubServer stub;
  std::atomic<int> in_flight{0};
  std::atomic<int> peak{0};
  stub.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    const int now = ++in_flight;
    int prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
    std::this_thread::sleep_for(30ms);
    --in_flight;
    res.set_content(chat_body("ok").dump(), "application/json");
  });
  auto cfg = fast_config(stub, nullptr);
  cfg.max_in_flight = 2;
  HttpProvider p(cfg);
  std::vector<std::thread> workers;
  for (int i = 0; i < 6; ++i) {
    workers.emplace_back([&] { chat_complete(p, user("x"), {}); });
  }
  for (auto& w : workers) w.join();
  EXPECT_LE(peak.load(), 2);
  EXPECT_GE(peak.load(), 1);
}

TEST(HttpProvider, UnreachableEndpointIsRetryable) {
  HttpProviderConfig cfg;
  cfg.chat_url = "http://127.0.0.1:1/v1/chat/completions";
  cfg.timeout = std::chrono::seconds(1);
  cfg.retry.max_attempts = 2;
  cfg.retry.sleep = [](std::chrono::milliseconds) {};
  HttpProvider p(cfg);
  try {
    chat_complete(p, user("x"), {});
    FAIL();
  } catch (const ProviderError& e) {
    EXPECT_TRUE(e.retryable());
  }
}
