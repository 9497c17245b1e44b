#include "ptd/embedding.hpp"

#include <algorithm>
#include <unordered_set>

#include "ptd/errors.hpp"
#include "ptd/image.hpp"
#include "ptd/manifest.hpp"
#include "ptd/parallel.hpp"

namespace ptd {

std::filesystem::path feature_file(const std::filesystem::path& root, FeatureKind kind) {
  return DatasetLayout{root}.features_dir() / (std::string(feature_kind_name(kind)) + ".ptdf");
}

FeatureMatrix embed_dataset(const std::filesystem::path& root, FeatureKind kind, EmbeddingBackend& backend,
                            const EmbedOptions& options) {
  const DatasetLayout layout{root};
  const auto manifest = read_manifest(layout.manifest());

  // Items carry only ids and text up front; pixels are read per batch.
  std::vector<EmbedItem> items;
  std::vector<const ImageRecord*> sources;
  if (keyed_by_prompt(kind)) {
    std::unordered_set<PromptId> seen;
    for (const auto& r : manifest) {
      if (seen.insert(r.prompt_id).second) items.push_back({r.prompt_id, r.prompt_text, {}});
    }
  } else {
    for (const auto& r : manifest) {
      if (r.flagged || !r.file_path) continue;
      items.push_back({r.image_id, {}, {}});
      sources.push_back(&r);
    }
  }

  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
  const std::size_t n_batches = (items.size() + batch - 1) / batch;
  std::vector<std::vector<std::vector<float>>> results(n_batches);
  parallel_for(n_batches, options.workers, [&](std::size_t b) {
    const std::size_t lo = b * batch, hi = std::min(items.size(), lo + batch);
    std::vector<EmbedItem> chunk(items.begin() + static_cast<std::ptrdiff_t>(lo),
                                 items.begin() + static_cast<std::ptrdiff_t>(hi));
    if (!keyed_by_prompt(kind)) {
      for (std::size_t i = lo; i < hi; ++i) chunk[i - lo].png = read_file(root / *sources[i]->file_path);
    }
    results[b] = backend.embed(kind, chunk);
    if (results[b].size() != chunk.size()) {
      throw TransportError("embedding backend returned " + std::to_string(results[b].size()) + " rows for " +
                           std::to_string(chunk.size()) + " items");
    }
  });

  std::size_t dim = 0;
  if (!results.empty() && !results.front().empty()) dim = results.front().front().size();
  FeatureMatrix m(kind, dim);
  std::size_t i = 0;
  for (const auto& rows : results) {
    for (const auto& row : rows) m.append(items[i++].id, row);
  }
  write_features(feature_file(root, kind), m);
  return m;
}

}  // namespace ptd
