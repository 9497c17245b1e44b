#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>

#include "ptd/embedding.hpp"
#include "ptd/generation.hpp"

namespace ptd {

/// Connection failures and 5xx replies are retried with exponential backoff;
/// 4xx replies fail at once.
struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  double multiplier = 2.0;
  std::chrono::seconds timeout{600};
};

class HttpClient;

/// POST <base>/v1/generate
///   {"prompt_text": str, "seeds": [int], "width": int, "height": int}
/// -> {"results": [{"seed": int, "png_base64": str, "nsfw_flagged": bool}]}
class HttpGenerator : public GeneratorBackend {
 public:
  explicit HttpGenerator(const std::string& base_url, RetryPolicy policy = {});
  ~HttpGenerator() override;
  std::vector<GeneratedImage> generate(const GenerateRequest& request) override;

 private:
  std::unique_ptr<HttpClient> client_;
};

/// POST <base>/v1/embed
///   {"kind": str, "items": [{"id": int, "text": str} | {"id": int, "png_base64": str}]}
/// -> {"kind": str, "dim": int, "rows": [[float]]}
/// With a shared directory configured the request also carries
/// "ptdf_path"; the service writes the rows there and replies
/// {"kind", "dim", "n_rows", "ptdf_path"} instead of inline rows.
class HttpEmbedder : public EmbeddingBackend {
 public:
  explicit HttpEmbedder(const std::string& base_url, RetryPolicy policy = {},
                        std::filesystem::path shared_dir = {});
  ~HttpEmbedder() override;
  std::vector<std::vector<float>> embed(FeatureKind kind, std::span<const EmbedItem> items) override;

 private:
  std::unique_ptr<HttpClient> client_;
  std::filesystem::path shared_dir_;
};

}  // namespace ptd
