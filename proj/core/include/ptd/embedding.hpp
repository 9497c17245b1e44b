#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ptd/dataset_store.hpp"

namespace ptd {

/// One input to an embedding call. Text kinds read `text`, image kinds `png`.
struct EmbedItem {
  std::uint64_t id = 0;
  std::string text;
  std::vector<std::uint8_t> png;
};

/// Feature extractor service; one output row per item, in item order.
class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::vector<std::vector<float>> embed(FeatureKind kind, std::span<const EmbedItem> items) = 0;
};

/// features/<kind name>.ptdf under a dataset root.
std::filesystem::path feature_file(const std::filesystem::path& root, FeatureKind kind);

struct EmbedOptions {
  std::size_t batch_size = 32;
  unsigned workers = 1;
};

/// Embeds every manifest image (or, for clip_text, every distinct prompt of
/// the manifest) and writes the feature file. Rows follow manifest order.
FeatureMatrix embed_dataset(const std::filesystem::path& root, FeatureKind kind, EmbeddingBackend& backend,
                            const EmbedOptions& options = {});

}  // namespace ptd
