#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>

#include "ptd/embedding.hpp"
#include "ptd/generation.hpp"
#include "ptd/image.hpp"

namespace ptd {

/// 64-bit FNV-1a; stable across platforms.
std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::string_view text, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// splitmix64 stream. Used instead of <random> distributions, whose output
/// differs between standard libraries.
class SplitMix {
 public:
  explicit SplitMix(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  double uniform();   // [0, 1)
  double gaussian();  // Box-Muller, standard normal

 private:
  std::uint64_t state_;
};

/// Decides whether the mock safety checker flags an output.
using FlagSchedule = std::function<bool(std::string_view prompt_text, Seed seed)>;

FlagSchedule never_flag();
FlagSchedule flag_odd_seeds();
/// Flags when any whole word of the prompt equals `word`, with probability
/// `rate` drawn from a hash of (prompt, seed).
FlagSchedule flag_word(std::string word, double rate = 1.0);
/// Flags a `rate` share of all outputs by hash.
FlagSchedule flag_rate(double rate);

/// Parses "never", "odd", "rate:<p>", "word:<w>" or "word:<w>@<p>".
FlagSchedule parse_flag_schedule(std::string_view spec);

/// Procedural image for (prompt, seed): gratings, value noise,
/// checkerboards, white noise and near-flat fields. Never all black.
RgbImage mock_texture(std::string_view prompt_text, Seed seed, int width, int height);

/// Deterministic in-process generator backend.
class MockBackend : public GeneratorBackend {
 public:
  explicit MockBackend(FlagSchedule schedule = never_flag()) : schedule_(std::move(schedule)) {}
  std::vector<GeneratedImage> generate(const GenerateRequest& request) override;

 private:
  FlagSchedule schedule_;
};

struct MockEmbedderDims {
  std::size_t clip = 512;
  std::size_t inception_pool = 2048;
  std::size_t inception_logits = 1008;
  std::size_t classifier = 1000;
};

/// Hash-derived pseudo embeddings. CLIP rows are unit norm and share a
/// common direction, so image/text scores land near 27; classifier rows are
/// on the simplex.
class MockEmbedder : public EmbeddingBackend {
 public:
  explicit MockEmbedder(MockEmbedderDims dims = {}) : dims_(dims) {}
  std::vector<std::vector<float>> embed(FeatureKind kind, std::span<const EmbedItem> items) override;
  std::size_t dim(FeatureKind kind) const;

 private:
  MockEmbedderDims dims_;
};

}  // namespace ptd
