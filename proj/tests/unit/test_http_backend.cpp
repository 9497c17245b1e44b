#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ptd/base64.hpp"
#include "ptd/errors.hpp"
#include "ptd/http_backend.hpp"
#include "ptd/mock_backend.hpp"
#include "scratch.hpp"

using namespace ptd;
using nlohmann::json;

namespace {

/// A stand-in for the model sidecar speaking the generate and embed wire format.
class FakeSidecar {
 public:
  FakeSidecar() {
    server_.Post("/v1/generate", [this](const httplib::Request& req, httplib::Response& res) {
      ++generate_calls;
      if (fail_first > 0) {
        --fail_first;
        res.status = 503;
        res.set_content(R"({"error":"warming up"})", "application/json");
        return;
      }
      if (reject) {
        res.status = 422;
        res.set_content(R"({"error":"seeds must be non-negative"})", "application/json");
        return;
      }
      const auto body = json::parse(req.body);
      GenerateRequest r{body.at("prompt_text"), body.at("seeds").get<std::vector<Seed>>(), body.at("width"),
                        body.at("height")};
      json out = {{"results", json::array()}};
      for (const auto& g : MockBackend(flag_odd_seeds()).generate(r)) {
        out["results"].push_back({{"seed", g.seed}, {"png_base64", base64_encode(g.png)}, {"nsfw_flagged", g.nsfw_flagged}});
      }
      if (garble) out["results"][0]["png_base64"] = "***";
      res.set_content(out.dump(), "application/json");
    });
    server_.Post("/v1/embed", [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = json::parse(req.body);
      const auto kind = parse_feature_kind(body.at("kind").get<std::string>());
      std::vector<EmbedItem> items;
      for (const auto& j : body.at("items")) {
        EmbedItem it;
        it.id = j.at("id");
        if (j.contains("text")) it.text = j["text"];
        if (j.contains("png_base64")) it.png = base64_decode(j["png_base64"].get<std::string>());
        items.push_back(std::move(it));
      }
      MockEmbedder e({8, 8, 8, 8});
      auto rows = e.embed(kind, items);
      json out = {{"kind", feature_kind_name(lie_kind ? FeatureKind::InceptionPool : kind)}, {"dim", 8}};
      if (body.contains("ptdf_path")) {
        std::vector<std::uint64_t> ids;
        for (const auto& it : items) ids.push_back(it.id);
        std::reverse(ids.begin(), ids.end());  // row order on disk need not match the request
        std::reverse(rows.begin(), rows.end());
        write_features(body["ptdf_path"].get<std::string>(), kind, rows, ids);
        out["ptdf_path"] = body["ptdf_path"];
        out["n_rows"] = rows.size();
      } else {
        if (drop_row) rows.pop_back();
        out["rows"] = rows;
      }
      res.set_content(out.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeSidecar() {
    server_.stop();
    thread_.join();
  }

  std::string url(const std::string& prefix = "") const {
    return "http://127.0.0.1:" + std::to_string(port_) + prefix;
  }

  std::atomic<int> generate_calls{0};
  std::atomic<int> fail_first{0};
  std::atomic<bool> reject{false};
  std::atomic<bool> garble{false};
  std::atomic<bool> lie_kind{false};
  std::atomic<bool> drop_row{false};

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

RetryPolicy fast(int attempts = 3) {
  RetryPolicy p;
  p.max_attempts = attempts;
  p.initial_backoff = std::chrono::milliseconds(1);
  p.timeout = std::chrono::seconds(10);
  return p;
}

}  // namespace

TEST(Base64, RoundTripAndRejectsGarbage) {
  for (std::size_t n = 0; n < 40; ++n) {
    std::vector<std::uint8_t> bytes(n);
    for (std::size_t i = 0; i < n; ++i) bytes[i] = static_cast<std::uint8_t>(i * 37 + 11);
    EXPECT_EQ(base64_decode(base64_encode(bytes)), bytes) << n;
  }
  const std::string hello = "hello";
  EXPECT_EQ(base64_encode(std::vector<std::uint8_t>(hello.begin(), hello.end())), "aGVsbG8=");
  EXPECT_THROW(base64_decode("a*b="), ArgumentError);
  EXPECT_THROW(base64_decode("abc"), ArgumentError);
}

TEST(HttpGeneratorTest, MatchesInProcessMock) {
  FakeSidecar sidecar;
  HttpGenerator gen(sidecar.url(), fast());
  const GenerateRequest req{"red woven texture", {10, 11, 12}, 24, 16};
  const auto remote = gen.generate(req);
  const auto local = MockBackend(flag_odd_seeds()).generate(req);
  ASSERT_EQ(remote.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(remote[i].seed, local[i].seed);
    EXPECT_EQ(remote[i].png, local[i].png);
    EXPECT_EQ(remote[i].nsfw_flagged, local[i].nsfw_flagged);
  }
}

TEST(HttpGeneratorTest, RetriesServerErrorsThenSucceeds) {
  FakeSidecar sidecar;
  sidecar.fail_first = 2;
  HttpGenerator gen(sidecar.url(), fast(3));
  EXPECT_EQ(gen.generate({"x", {1}, 8, 8}).size(), 1u);
  EXPECT_EQ(sidecar.generate_calls.load(), 3);
}

TEST(HttpGeneratorTest, GivesUpAfterMaxAttempts) {
  FakeSidecar sidecar;
  sidecar.fail_first = 5;
  HttpGenerator gen(sidecar.url(), fast(2));
  try {
    gen.generate({"x", {1}, 8, 8});
    FAIL();
  } catch (const TransportError& e) {
    EXPECT_NE(std::string(e.what()).find("warming up"), std::string::npos);
  }
  EXPECT_EQ(sidecar.generate_calls.load(), 2);
}

TEST(HttpGeneratorTest, ClientErrorsAreNotRetried) {
  FakeSidecar sidecar;
  sidecar.reject = true;
  HttpGenerator gen(sidecar.url(), fast(3));
  try {
    gen.generate({"x", {1}, 8, 8});
    FAIL();
  } catch (const TransportError& e) {
    EXPECT_NE(std::string(e.what()).find("seeds must be non-negative"), std::string::npos);
  }
  EXPECT_EQ(sidecar.generate_calls.load(), 1);
}

TEST(HttpGeneratorTest, MalformedPayloadAndDeadHost) {
  FakeSidecar sidecar;
  sidecar.garble = true;
  HttpGenerator gen(sidecar.url(), fast());
  EXPECT_THROW(gen.generate({"x", {1}, 8, 8}), TransportError);

  HttpGenerator missing(sidecar.url("/nowhere"), fast(1));
  EXPECT_THROW(missing.generate({"x", {1}, 8, 8}), TransportError);

  int dead_port;
  {
    httplib::Server s;
    dead_port = s.bind_to_any_port("127.0.0.1");
  }
  HttpGenerator dead("http://127.0.0.1:" + std::to_string(dead_port), fast(2));
  EXPECT_THROW(dead.generate({"x", {1}, 8, 8}), TransportError);
  EXPECT_THROW(HttpGenerator("http://"), ConfigError);
}

TEST(HttpEmbedderTest, InlineRowsMatchMock) {
  FakeSidecar sidecar;
  HttpEmbedder emb(sidecar.url(), fast());
  std::vector<EmbedItem> text = {{3, "woven texture", {}}, {9, "dotted texture", {}}};
  std::vector<EmbedItem> imgs = {{1, {}, encode_png(mock_texture("woven texture", 1, 8, 8))}};
  MockEmbedder local({8, 8, 8, 8});
  EXPECT_EQ(emb.embed(FeatureKind::ClipText, text), local.embed(FeatureKind::ClipText, text));
  EXPECT_EQ(emb.embed(FeatureKind::ClipImage, imgs), local.embed(FeatureKind::ClipImage, imgs));
}

TEST(HttpEmbedderTest, SharedFileRepliesAreReorderedById) {
  FakeSidecar sidecar;
  testing_support::ScratchDir dir;
  HttpEmbedder emb(sidecar.url(), fast(), dir.path());
  std::vector<EmbedItem> imgs;
  for (std::uint64_t i = 0; i < 5; ++i) imgs.push_back({i * 10, {}, encode_png(mock_texture("x", i, 8, 8))});
  MockEmbedder local({8, 8, 8, 8});
  EXPECT_EQ(emb.embed(FeatureKind::ClassifierProbs, imgs), local.embed(FeatureKind::ClassifierProbs, imgs));
  EXPECT_TRUE(std::filesystem::is_empty(dir.path()));
}

TEST(HttpEmbedderTest, InconsistentRepliesAreTransportErrors) {
  FakeSidecar sidecar;
  HttpEmbedder emb(sidecar.url(), fast());
  std::vector<EmbedItem> text = {{1, "a", {}}, {2, "b", {}}};
  sidecar.lie_kind = true;
  EXPECT_THROW(emb.embed(FeatureKind::ClipText, text), TransportError);
  sidecar.lie_kind = false;
  sidecar.drop_row = true;
  EXPECT_THROW(emb.embed(FeatureKind::ClipText, text), TransportError);
}
