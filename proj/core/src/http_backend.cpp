#include "ptd/http_backend.hpp"

#include <atomic>
#include <cmath>
#include <thread>
#include <unordered_set>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ptd/base64.hpp"
#include "ptd/errors.hpp"

namespace ptd {

using nlohmann::json;

class HttpClient {
 public:
  HttpClient(const std::string& base_url, RetryPolicy policy) : policy_(policy) {
    const auto scheme = base_url.find("://");
    const auto host_start = scheme == std::string::npos ? 0 : scheme + 3;
    const auto slash = base_url.find('/', host_start);
    origin_ = base_url.substr(0, slash);
    if (slash != std::string::npos) prefix_ = base_url.substr(slash);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    if (origin_.size() == host_start) throw ConfigError("backend URL has no host: " + base_url);
  }

  json post(const std::string& path, const json& body) {
    const std::string payload = body.dump();
    auto backoff = policy_.initial_backoff;
    std::string last_error;
    for (int attempt = 1; attempt <= std::max(1, policy_.max_attempts); ++attempt) {
      // httplib clients are not safe to share between threads.
      httplib::Client cli(origin_);
      cli.set_connection_timeout(policy_.timeout);
      cli.set_read_timeout(policy_.timeout);
      cli.set_write_timeout(policy_.timeout);
      auto res = cli.Post(prefix_ + path, payload, "application/json");
      if (!res) {
        last_error = httplib::to_string(res.error());
      } else if (res->status >= 200 && res->status < 300) {
        try {
          return json::parse(res->body);
        } catch (const json::exception& e) {
          throw TransportError(path + ": response is not JSON: " + e.what());
        }
      } else {
        last_error = "HTTP " + std::to_string(res->status) + ": " + reason_of(res->body);
        if (res->status < 500) throw TransportError(origin_ + prefix_ + path + " rejected request: " + last_error);
      }
      if (attempt < policy_.max_attempts) {
        std::this_thread::sleep_for(backoff);
        backoff = std::chrono::milliseconds(
            static_cast<long long>(std::llround(static_cast<double>(backoff.count()) * policy_.multiplier)));
      }
    }
    throw TransportError(origin_ + prefix_ + path + " failed after " + std::to_string(policy_.max_attempts) +
                         " attempts: " + last_error);
  }

 private:
  static std::string reason_of(const std::string& body) {
    auto j = json::parse(body, nullptr, false);
    if (j.is_object() && j.contains("error") && j["error"].is_string()) return j["error"].get<std::string>();
    return body.substr(0, 200);
  }

  RetryPolicy policy_;
  std::string origin_;
  std::string prefix_;
};

HttpGenerator::HttpGenerator(const std::string& base_url, RetryPolicy policy)
    : client_(std::make_unique<HttpClient>(base_url, policy)) {}
HttpGenerator::~HttpGenerator() = default;

std::vector<GeneratedImage> HttpGenerator::generate(const GenerateRequest& request) {
  const json body = {{"prompt_text", request.prompt_text},
                     {"seeds", request.seeds},
                     {"width", request.width},
                     {"height", request.height}};
  const json reply = client_->post("/v1/generate", body);
  std::vector<GeneratedImage> out;
  try {
    for (const auto& r : reply.at("results")) {
      GeneratedImage g;
      g.seed = r.at("seed").get<Seed>();
      g.png = base64_decode(r.at("png_base64").get<std::string>());
      g.nsfw_flagged = r.at("nsfw_flagged").get<bool>();
      out.push_back(std::move(g));
    }
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed /v1/generate response: ") + e.what());
  } catch (const ArgumentError& e) {
    throw TransportError(std::string("malformed /v1/generate response: ") + e.what());
  }
  return out;
}

HttpEmbedder::HttpEmbedder(const std::string& base_url, RetryPolicy policy, std::filesystem::path shared_dir)
    : client_(std::make_unique<HttpClient>(base_url, policy)), shared_dir_(std::move(shared_dir)) {}
HttpEmbedder::~HttpEmbedder() = default;

std::vector<std::vector<float>> HttpEmbedder::embed(FeatureKind kind, std::span<const EmbedItem> items) {
  json body = {{"kind", feature_kind_name(kind)}, {"items", json::array()}};
  for (const auto& item : items) {
    json j = {{"id", item.id}};
    if (keyed_by_prompt(kind)) {
      j["text"] = item.text;
    } else {
      j["png_base64"] = base64_encode(item.png);
    }
    body["items"].push_back(std::move(j));
  }
  std::filesystem::path file;
  if (!shared_dir_.empty()) {
    static std::atomic<std::uint64_t> counter{0};
    file = shared_dir_ / (std::string(feature_kind_name(kind)) + "_" +
                          std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) + "_" +
                          std::to_string(counter++) + ".ptdf");
    body["ptdf_path"] = file.string();
  }
  const json reply = client_->post("/v1/embed", body);

  std::vector<std::vector<float>> rows;
  try {
    if (reply.at("kind").get<std::string>() != feature_kind_name(kind)) {
      throw TransportError("embed reply kind " + reply.at("kind").get<std::string>() + " does not match request");
    }
    if (!file.empty()) {
      const FeatureMatrix m = load_features(reply.at("ptdf_path").get<std::string>());
      std::filesystem::remove(file);
      std::filesystem::remove(index_path_for(file));
      for (const auto& item : items) {
        const auto r = m.row_for(item.id);
        rows.emplace_back(r.begin(), r.end());
      }
    } else {
      const auto dim = reply.at("dim").get<std::size_t>();
      for (const auto& r : reply.at("rows")) {
        auto row = r.get<std::vector<float>>();
        if (row.size() != dim) throw TransportError("embed reply row has " + std::to_string(row.size()) + " values, dim is " + std::to_string(dim));
        rows.push_back(std::move(row));
      }
    }
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed /v1/embed response: ") + e.what());
  }
  if (rows.size() != items.size()) {
    throw TransportError("embed reply has " + std::to_string(rows.size()) + " rows for " +
                         std::to_string(items.size()) + " items");
  }
  return rows;
}

}  // namespace ptd
